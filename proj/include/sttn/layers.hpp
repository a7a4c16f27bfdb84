#pragma once
// Forward semantics of the network: trainable CSP feature layer, Kronecker
// fusion of the three modality feature vectors, tensor contraction layers
// (TCL) and the Tucker-structured tensor regression head (TRL).
//
// Parameters and the forward pass are templated on the scalar type; training
// runs in double, and the finite-difference checker re-evaluates the loss in
// long double.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sttn/tensor.hpp"

namespace sttn {

inline constexpr int kModalities = 3;  // x, y, z
inline constexpr double kCspEpsilon = 1e-8;

enum class Activation { sigmoid, relu, tanh, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

using Extents3 = std::array<Index, 3>;

struct ModelConfig {
    Index feature_dim = 24;              // M, CSP output length per modality
    Index channels = 24;                 // C, joints per window
    std::vector<Extents3> tcl_dims;      // output extents of each TCL, in order
    Extents3 trl_ranks{2, 2, 2};
    Index num_classes = 7;
    Activation activation = Activation::sigmoid;

    // Extents entering the TRL: the last TCL's output, or (M,M,M) with no TCL.
    Extents3 trl_input() const;

    // Throws ConfigError listing every violated constraint.
    void validate() const;
};

// Cubic TCL chain `dims` (each layer d x d x d) with TRL ranks (2,2,2).
ModelConfig make_cubic_config(Index feature_dim, Index channels, const std::vector<Index>& dims,
                              Index num_classes = 7, Activation activation = Activation::sigmoid);

template <typename Scalar>
struct BasicCspLayerParams {
    std::array<Matrix<Scalar>, kModalities> w;  // each M x C
};

template <typename Scalar>
struct BasicTclLayerParams {
    std::array<Matrix<Scalar>, 3> factors;  // factor j is P_j x Q_j
};

template <typename Scalar>
struct BasicTrlClassParams {
    Tensor<Scalar> core;                    // R_1 x R_2 x R_3
    std::array<Matrix<Scalar>, 3> factors;  // factor j is P_j x R_j
    Scalar bias = 0;
};

template <typename Scalar>
struct BasicTrlHeadParams {
    std::vector<BasicTrlClassParams<Scalar>> classes;
};

template <typename Scalar>
struct BasicModelParams {
    BasicCspLayerParams<Scalar> csp;
    std::vector<BasicTclLayerParams<Scalar>> tcls;
    BasicTrlHeadParams<Scalar> trl;
    Activation activation = Activation::sigmoid;

    ModelConfig config() const;

    template <typename To>
    BasicModelParams<To> cast() const;
};

using CspLayerParams = BasicCspLayerParams<double>;
using TclLayerParams = BasicTclLayerParams<double>;
using TrlClassParams = BasicTrlClassParams<double>;
using TrlHeadParams = BasicTrlHeadParams<double>;
using ModelParams = BasicModelParams<double>;

// Partial derivatives of a scalar loss, laid out exactly like ModelParams.
using GradientBundle = ModelParams;

// Zero-filled parameters of the given structure.
ModelParams make_zero_params(const ModelConfig& config);
GradientBundle zeros_like(const ModelParams& params);

// Scaled-uniform init: every matrix U(-a, a) with a = sqrt(6 / (rows + cols));
// TRL cores use fan_in + fan_out = R_1 R_2 R_3 + 1; biases start at 0.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Visits every parameter block as a span, in a fixed order: CSP (x, y, z),
// each TCL's three factors, then per class core, three factors, bias.
template <typename Params, typename F>
void for_each_block(Params& p, F&& f) {
    auto visit_matrix = [&](auto& m) { f(std::span(m.data(), static_cast<std::size_t>(m.size()))); };
    for (auto& w : p.csp.w) visit_matrix(w);
    for (auto& layer : p.tcls)
        for (auto& m : layer.factors) visit_matrix(m);
    for (auto& cls : p.trl.classes) {
        f(cls.core.data());
        for (auto& m : cls.factors) visit_matrix(m);
        f(std::span(&cls.bias, 1));
    }
}

// Closed-form trainable-parameter count:
//   3 M C + sum_k sum_j P_kj Q_kj + L (R_1 R_2 R_3 + sum_j P_j R_j + 1)
Index count_params(const ModelConfig& config);

// Number of scalars actually held by `params`.
Index allocated_param_count(const ModelParams& params);

std::vector<double> flatten(const ModelParams& params);
void assign_flat(ModelParams& params, std::span<const double> values);

// The C x T matrix of one modality of a C x T x 3 window.
template <typename Scalar>
Matrix<Scalar> modality_matrix(const Tensor<Scalar>& window, int modality) {
    if (window.order() != 3 || window.extent(2) != kModalities) {
        throw ShapeError("window must have shape (C,T,3), got " + shape_string(window.shape()));
    }
    if (modality < 0 || modality >= kModalities) throw ShapeError("modality index out of range");
    const Index c = window.extent(0), t = window.extent(1);
    Matrix<Scalar> s(c, t);
    const auto d = window.data();
    for (Index i = 0; i < c; ++i)
        for (Index k = 0; k < t; ++k) s(i, k) = d[static_cast<std::size_t>((i * t + k) * kModalities + modality)];
    return s;
}

// Intermediates of the CSP feature map for one modality.
template <typename Scalar>
struct CspTrace {
    Matrix<Scalar> centered;   // C x T, each channel row mean-removed
    Matrix<Scalar> projected;  // M x T, W * centered with row means removed
    Vector<Scalar> energy;     // population variance + epsilon per projected row
    Scalar total = 0;          // sum of energy
    Vector<Scalar> features;   // log(energy / total)
};

template <typename Scalar>
CspTrace<Scalar> csp_trace(const Matrix<Scalar>& w, const Matrix<Scalar>& signal) {
    if (w.cols() != signal.rows()) {
        throw ShapeError("csp: filter has " + std::to_string(w.cols()) + " columns but signal has " +
                         std::to_string(signal.rows()) + " channels");
    }
    if (signal.cols() < 1) throw DataError("csp: window has no time steps");
    if (!signal.allFinite()) throw DataError("csp: non-finite input signal");
    CspTrace<Scalar> tr;
    const Scalar inv_t = Scalar(1) / static_cast<Scalar>(signal.cols());
    tr.centered = signal.colwise() - signal.rowwise().mean();
    tr.projected = w * tr.centered;
    tr.projected = tr.projected.colwise() - tr.projected.rowwise().mean();
    tr.energy = (tr.projected.rowwise().squaredNorm() * inv_t).array() + Scalar(kCspEpsilon);
    tr.total = tr.energy.sum();
    tr.features = (tr.energy / tr.total).array().log();
    if (!tr.features.allFinite()) throw NumericError("csp", "non-finite feature");
    return tr;
}

// Log-normalized variance features of the projected, mean-centered signal.
// A single time step (T = 1) has zero variance and yields log(1/M) throughout.
template <typename Scalar>
Vector<Scalar> csp_features(const Matrix<Scalar>& w, const Matrix<Scalar>& signal) {
    return csp_trace(w, signal).features;
}

template <typename Scalar>
std::array<Vector<Scalar>, kModalities> csp_forward(const BasicCspLayerParams<Scalar>& params,
                                                    const Tensor<Scalar>& window) {
    std::array<Vector<Scalar>, kModalities> out;
    for (int j = 0; j < kModalities; ++j) out[j] = csp_features(params.w[j], modality_matrix(window, j));
    return out;
}

template <typename Scalar>
Tensor<Scalar> fuse(std::span<const Vector<Scalar>> features) {
    if (features.size() != kModalities) {
        throw ShapeError("fuse: expected 3 feature vectors, got " + std::to_string(features.size()));
    }
    if (features[0].size() != features[1].size() || features[0].size() != features[2].size()) {
        throw ShapeError("fuse: feature lengths differ (" + std::to_string(features[0].size()) + "," +
                         std::to_string(features[1].size()) + "," + std::to_string(features[2].size()) + ")");
    }
    return outer_product3(features[0], features[1], features[2]);
}

template <typename Scalar>
Tensor<Scalar> fuse(const std::array<Vector<Scalar>, kModalities>& features) {
    return fuse(std::span<const Vector<Scalar>>(features));
}

// Successive transposed mode products h x_1 F_1^T x_2 F_2^T x_3 F_3^T with
// all intermediate stages retained; stages[0] is h, stages[3] the result.
template <typename Scalar>
struct ContractTrace {
    std::array<Tensor<Scalar>, 4> stages;
};

template <typename Scalar>
ContractTrace<Scalar> contract_transposed(const Tensor<Scalar>& h, const std::array<Matrix<Scalar>, 3>& factors) {
    if (h.order() != 3) throw ShapeError("contraction input must be order 3, got " + shape_string(h.shape()));
    ContractTrace<Scalar> tr;
    tr.stages[0] = h;
    for (int j = 0; j < 3; ++j) {
        if (factors[j].rows() != h.extent(j)) {
            throw ShapeError("contraction: factor " + std::to_string(j) + " has " + std::to_string(factors[j].rows()) +
                             " rows but input mode " + std::to_string(j) + " has extent " +
                             std::to_string(h.extent(j)));
        }
        tr.stages[j + 1] = mode_product(tr.stages[j], factors[j].transpose(), j);
    }
    return tr;
}

template <typename Scalar>
Scalar activate(Activation a, Scalar z) {
    using std::exp, std::tanh;
    switch (a) {
        case Activation::sigmoid: return Scalar(1) / (Scalar(1) + exp(-z));
        case Activation::relu: return z > Scalar(0) ? z : Scalar(0);
        case Activation::tanh: return tanh(z);
        case Activation::identity: return z;
    }
    return z;
}

// Derivative expressed through the pre-activation z and output h = g(z).
// relu uses subgradient 0 at z == 0.
template <typename Scalar>
Scalar activate_derivative(Activation a, Scalar z, Scalar h) {
    switch (a) {
        case Activation::sigmoid: return h * (Scalar(1) - h);
        case Activation::relu: return z > Scalar(0) ? Scalar(1) : Scalar(0);
        case Activation::tanh: return Scalar(1) - h * h;
        case Activation::identity: return Scalar(1);
    }
    return Scalar(1);
}

template <typename Scalar>
struct TclTrace {
    ContractTrace<Scalar> contraction;
    Tensor<Scalar> output;
};

template <typename Scalar>
TclTrace<Scalar> tcl_trace(const BasicTclLayerParams<Scalar>& params, const Tensor<Scalar>& h,
                           Activation activation) {
    TclTrace<Scalar> tr;
    tr.contraction = contract_transposed(h, params.factors);
    tr.output = map(tr.contraction.stages[3], [activation](Scalar z) { return activate(activation, z); });
    return tr;
}

template <typename Scalar>
Tensor<Scalar> tcl_forward(const BasicTclLayerParams<Scalar>& params, const Tensor<Scalar>& h,
                           Activation activation) {
    return tcl_trace(params, h, activation).output;
}

// Raw per-class scores <h, G_l x_1 U_1 x_2 U_2 x_3 U_3> + b_l, evaluated as
// <h x_1 U_1^T x_2 U_2^T x_3 U_3^T, G_l> + b_l. Softmax is applied by the
// loss and prediction paths.
template <typename Scalar>
Vector<Scalar> trl_forward(const BasicTrlHeadParams<Scalar>& params, const Tensor<Scalar>& h) {
    Vector<Scalar> logits(static_cast<Index>(params.classes.size()));
    for (std::size_t l = 0; l < params.classes.size(); ++l) {
        const auto& cls = params.classes[l];
        const auto projected = contract_transposed(h, cls.factors).stages[3];
        logits[static_cast<Index>(l)] = inner_product(projected, cls.core) + cls.bias;
    }
    return logits;
}

// Full forward intermediates, consumed by backward().
template <typename Scalar>
struct ForwardTrace {
    std::array<CspTrace<Scalar>, kModalities> csp;
    Tensor<Scalar> fused;
    std::vector<TclTrace<Scalar>> tcls;
    std::vector<ContractTrace<Scalar>> trl;  // one per class
    Vector<Scalar> logits;
};

template <typename Scalar>
ForwardTrace<Scalar> forward_trace(const BasicModelParams<Scalar>& params, const Tensor<Scalar>& window) {
    ForwardTrace<Scalar> tr;
    std::array<Vector<Scalar>, kModalities> features;
    for (int j = 0; j < kModalities; ++j) {
        tr.csp[j] = csp_trace(params.csp.w[j], modality_matrix(window, j));
        features[j] = tr.csp[j].features;
    }
    tr.fused = fuse(features);
    const Tensor<Scalar>* h = &tr.fused;
    tr.tcls.reserve(params.tcls.size());
    for (std::size_t k = 0; k < params.tcls.size(); ++k) {
        tr.tcls.push_back(tcl_trace(params.tcls[k], *h, params.activation));
        if (!all_finite(tr.tcls.back().output)) {
            throw NumericError("tcl" + std::to_string(k + 1), "non-finite activation");
        }
        h = &tr.tcls.back().output;
    }
    tr.logits.resize(static_cast<Index>(params.trl.classes.size()));
    for (std::size_t l = 0; l < params.trl.classes.size(); ++l) {
        const auto& cls = params.trl.classes[l];
        tr.trl.push_back(contract_transposed(*h, cls.factors));
        tr.logits[static_cast<Index>(l)] = inner_product(tr.trl.back().stages[3], cls.core) + cls.bias;
    }
    if (!tr.logits.allFinite()) throw NumericError("trl", "non-finite logit");
    return tr;
}

template <typename Scalar>
Vector<Scalar> model_forward(const BasicModelParams<Scalar>& params, const Tensor<Scalar>& window) {
    Tensor<Scalar> h = fuse(csp_forward(params.csp, window));
    for (const auto& layer : params.tcls) h = tcl_forward(layer, h, params.activation);
    return trl_forward(params.trl, h);
}

// Dense weight of a TCL as an order-6 tensor of shape (Q_1,Q_2,Q_3,P_1,P_2,P_3).
// The slice for output unit q is tucker_reconstruct of an all-ones 1x1x1 core
// with the q-th factor columns, so Z[q] = <h, slice_q>.
DenseTensor tcl_dense_weight(const TclLayerParams& params);

template <typename Scalar>
ModelConfig BasicModelParams<Scalar>::config() const {
    ModelConfig c;
    c.feature_dim = csp.w[0].rows();
    c.channels = csp.w[0].cols();
    for (const auto& layer : tcls)
        c.tcl_dims.push_back({layer.factors[0].cols(), layer.factors[1].cols(), layer.factors[2].cols()});
    if (!trl.classes.empty()) {
        const auto& core = trl.classes.front().core;
        c.trl_ranks = {core.extent(0), core.extent(1), core.extent(2)};
    }
    c.num_classes = static_cast<Index>(trl.classes.size());
    c.activation = activation;
    return c;
}

template <typename Scalar>
template <typename To>
BasicModelParams<To> BasicModelParams<Scalar>::cast() const {
    BasicModelParams<To> out;
    out.activation = activation;
    for (int j = 0; j < kModalities; ++j) out.csp.w[j] = csp.w[j].template cast<To>();
    for (const auto& layer : tcls) {
        BasicTclLayerParams<To> l;
        for (int j = 0; j < 3; ++j) l.factors[j] = layer.factors[j].template cast<To>();
        out.tcls.push_back(std::move(l));
    }
    for (const auto& cls : trl.classes) {
        BasicTrlClassParams<To> c;
        c.core = Tensor<To>(cls.core.shape(), std::vector<To>(cls.core.data().begin(), cls.core.data().end()));
        for (int j = 0; j < 3; ++j) c.factors[j] = cls.factors[j].template cast<To>();
        c.bias = static_cast<To>(cls.bias);
        out.trl.classes.push_back(std::move(c));
    }
    return out;
}

template <typename To, typename Scalar>
Tensor<To> tensor_cast(const Tensor<Scalar>& t) {
    return Tensor<To>(t.shape(), std::vector<To>(t.data().begin(), t.data().end()));
}

}  // namespace sttn
