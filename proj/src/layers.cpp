#include "sttn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "sttn/random.hpp"

namespace sttn {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::sigmoid: return "sigmoid";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "unknown";
}

Activation activation_from_string(const std::string& name) {
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + name + "' (expected sigmoid, relu, tanh or identity)",
                      "activation");
}

Extents3 ModelConfig::trl_input() const {
    if (tcl_dims.empty()) return {feature_dim, feature_dim, feature_dim};
    return tcl_dims.back();
}

void ModelConfig::validate() const {
    std::vector<std::string> problems;
    if (feature_dim < 2) problems.push_back("feature_dim (M) must be >= 2");
    if (channels < 1) problems.push_back("channels (C) must be >= 1");
    if (num_classes < 1) problems.push_back("num_classes must be >= 1");
    for (std::size_t k = 0; k < tcl_dims.size(); ++k)
        if (std::ranges::any_of(tcl_dims[k], [](Index e) { return e < 1; }))
            problems.push_back("tcl_dims[" + std::to_string(k) + "] extents must be >= 1");
    const Extents3 in = trl_input();
    for (int j = 0; j < 3; ++j) {
        if (trl_ranks[j] < 1) problems.push_back("trl_ranks[" + std::to_string(j) + "] must be >= 1");
        if (trl_ranks[j] > in[j]) {
            problems.push_back("trl_ranks[" + std::to_string(j) + "] = " + std::to_string(trl_ranks[j]) +
                               " exceeds TRL input extent " + std::to_string(in[j]));
        }
    }
    if (!problems.empty()) {
        std::string msg = "invalid model config:";
        for (auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg, "model");
    }
}

ModelConfig make_cubic_config(Index feature_dim, Index channels, const std::vector<Index>& dims, Index num_classes,
                              Activation activation) {
    ModelConfig c;
    c.feature_dim = feature_dim;
    c.channels = channels;
    for (Index d : dims) c.tcl_dims.push_back({d, d, d});
    c.trl_ranks = {2, 2, 2};
    c.num_classes = num_classes;
    c.activation = activation;
    return c;
}

ModelParams make_zero_params(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.activation = config.activation;
    for (auto& w : p.csp.w) w = MatrixXd::Zero(config.feature_dim, config.channels);
    Extents3 in{config.feature_dim, config.feature_dim, config.feature_dim};
    for (const auto& out : config.tcl_dims) {
        TclLayerParams layer;
        for (int j = 0; j < 3; ++j) layer.factors[j] = MatrixXd::Zero(in[j], out[j]);
        p.tcls.push_back(std::move(layer));
        in = out;
    }
    const auto& r = config.trl_ranks;
    for (Index l = 0; l < config.num_classes; ++l) {
        TrlClassParams cls;
        cls.core = DenseTensor(Shape{r[0], r[1], r[2]});
        for (int j = 0; j < 3; ++j) cls.factors[j] = MatrixXd::Zero(in[j], r[j]);
        p.trl.classes.push_back(std::move(cls));
    }
    return p;
}

GradientBundle zeros_like(const ModelParams& params) {
    GradientBundle g = params;
    for_each_block(g, [](std::span<double> b) { std::fill(b.begin(), b.end(), 0.0); });
    return g;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    ModelParams p = make_zero_params(config);
    SplitMix64 rng(seed);
    auto fill = [&](std::span<double> block, double fan) {
        const double a = std::sqrt(6.0 / fan);
        for (auto& v : block) v = rng.uniform(-a, a);
    };
    auto fill_matrix = [&](MatrixXd& m) {
        fill(std::span(m.data(), static_cast<std::size_t>(m.size())), static_cast<double>(m.rows() + m.cols()));
    };
    for (auto& w : p.csp.w) fill_matrix(w);
    for (auto& layer : p.tcls)
        for (auto& f : layer.factors) fill_matrix(f);
    for (auto& cls : p.trl.classes) {
        fill(cls.core.data(), static_cast<double>(cls.core.size() + 1));
        for (auto& f : cls.factors) fill_matrix(f);
        cls.bias = 0.0;
    }
    return p;
}

Index count_params(const ModelConfig& config) {
    config.validate();
    const Index m = config.feature_dim;
    Index total = kModalities * m * config.channels;
    Extents3 in{m, m, m};
    for (const auto& out : config.tcl_dims) {
        for (int j = 0; j < 3; ++j) total += in[j] * out[j];
        in = out;
    }
    const auto& r = config.trl_ranks;
    Index per_class = r[0] * r[1] * r[2] + 1;
    for (int j = 0; j < 3; ++j) per_class += in[j] * r[j];
    return total + config.num_classes * per_class;
}

Index allocated_param_count(const ModelParams& params) {
    Index n = 0;
    for_each_block(params, [&](auto block) { n += static_cast<Index>(block.size()); });
    return n;
}

std::vector<double> flatten(const ModelParams& params) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(allocated_param_count(params)));
    for_each_block(params, [&](auto block) { out.insert(out.end(), block.begin(), block.end()); });
    return out;
}

void assign_flat(ModelParams& params, std::span<const double> values) {
    if (static_cast<Index>(values.size()) != allocated_param_count(params)) {
        throw ShapeError("assign_flat: " + std::to_string(values.size()) + " values for " +
                         std::to_string(allocated_param_count(params)) + " parameters");
    }
    std::size_t pos = 0;
    for_each_block(params, [&](std::span<double> block) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), block.size(), block.begin());
        pos += block.size();
    });
}

DenseTensor tcl_dense_weight(const TclLayerParams& params) {
    const auto& f = params.factors;
    const Shape in{f[0].rows(), f[1].rows(), f[2].rows()};
    const Index slice = shape_product(in);
    DenseTensor w(Shape{f[0].cols(), f[1].cols(), f[2].cols(), in[0], in[1], in[2]});
    const DenseTensor unit = DenseTensor::constant(Shape{1, 1, 1}, 1.0);
    Index q = 0;
    for (Index a = 0; a < f[0].cols(); ++a)
        for (Index b = 0; b < f[1].cols(); ++b)
            for (Index c = 0; c < f[2].cols(); ++c, ++q) {
                const std::array<MatrixXd, 3> cols{MatrixXd(f[0].col(a)), MatrixXd(f[1].col(b)),
                                                   MatrixXd(f[2].col(c))};
                const auto block = tucker_reconstruct<double>(unit, cols);
                std::copy(block.data().begin(), block.data().end(), w.data().begin() + q * slice);
            }
    return w;
}

}  // namespace sttn
