#include "sttn/gradients.hpp"

#include <cmath>

#include "sttn/loss.hpp"

namespace sttn {

namespace {

void require_finite(const MatrixXd& m, const std::string& layer) {
    if (!m.allFinite()) throw NumericError(layer, "non-finite gradient");
}

// Gradient of the features of one CSP modality with respect to W.
//   f_k = log u_k - log sum(u),  u_m = var(Y_m) + eps,  Y = W * S_centered
MatrixXd csp_backward(const CspTrace<double>& tr, const VectorXd& d_features) {
    const double t = static_cast<double>(tr.centered.cols());
    const VectorXd d_energy = d_features.cwiseQuotient(tr.energy).array() - d_features.sum() / tr.total;
    const MatrixXd d_projected = (d_energy * (2.0 / t)).asDiagonal() * tr.projected;
    return d_projected * tr.centered.transpose();
}

// Pre-activation signs of every relu layer, used to detect kink crossings.
std::vector<bool> relu_pattern(const ModelParams& params, const DenseTensor& window) {
    std::vector<bool> pattern;
    const auto tr = forward_trace(params, window);
    for (const auto& layer : tr.tcls)
        for (double z : layer.contraction.stages[3].data()) pattern.push_back(z > 0.0);
    return pattern;
}

}  // namespace

DenseTensor contract_transposed_backward(const ContractTrace<double>& trace, const std::array<MatrixXd, 3>& factors,
                                         DenseTensor d_output, std::array<MatrixXd, 3>& dfactors) {
    DenseTensor d = std::move(d_output);
    for (int j = 2; j >= 0; --j) {
        dfactors[j] += mode_gram(d, trace.stages[j], j).transpose();
        d = mode_product(d, factors[j], j);
    }
    return d;
}

LossAndGradient backward(const ModelParams& params, const DenseTensor& window, Index target,
                         std::span<const double> class_weights) {
    for (double w : class_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("class weights must be finite and non-negative");
    }
    const auto tr = forward_trace(params, window);
    LossAndGradient out;
    out.loss = weighted_ce_loss(tr.logits, target, class_weights);
    out.grads = zeros_like(params);
    GradientBundle& g = out.grads;

    const VectorXd d_logits = weighted_ce_logit_grad(tr.logits, target, class_weights);

    // Tensor regression head.
    const DenseTensor& head_input = params.tcls.empty() ? tr.fused : tr.tcls.back().output;
    DenseTensor d_h(head_input.shape());
    for (std::size_t l = 0; l < params.trl.classes.size(); ++l) {
        const auto& cls = params.trl.classes[l];
        auto& gcls = g.trl.classes[l];
        const double dl = d_logits[static_cast<Index>(l)];
        gcls.bias = dl;
        gcls.core = tr.trl[l].stages[3] * dl;
        d_h += contract_transposed_backward(tr.trl[l], cls.factors, cls.core * dl, gcls.factors);
        for (const auto& f : gcls.factors) require_finite(f, "trl");
    }

    // Contraction layers, last to first.
    for (std::size_t k = params.tcls.size(); k-- > 0;) {
        const auto& layer = tr.tcls[k];
        const auto z = layer.contraction.stages[3].data();
        const auto h = layer.output.data();
        auto dz = d_h.data();
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= activate_derivative(params.activation, z[i], h[i]);
        d_h = contract_transposed_backward(layer.contraction, params.tcls[k].factors, std::move(d_h),
                                           g.tcls[k].factors);
        for (const auto& f : g.tcls[k].factors) require_finite(f, "tcl" + std::to_string(k + 1));
    }

    // Fusion: X = f_x (x) f_y (x) f_z, so d f_x = dX x_2 f_y^T x_3 f_z^T etc.
    std::array<VectorXd, kModalities> d_features;
    for (int j = 0; j < kModalities; ++j) {
        DenseTensor reduced = d_h;
        for (int other = 0; other < kModalities; ++other) {
            if (other == j) continue;
            reduced = mode_product(reduced, tr.csp[other].features.transpose(), other);
        }
        d_features[j] = Eigen::Map<const VectorXd>(reduced.data().data(), reduced.size());
    }

    for (int j = 0; j < kModalities; ++j) {
        g.csp.w[j] = csp_backward(tr.csp[j], d_features[j]);
        require_finite(g.csp.w[j], "csp");
    }
    return out;
}

double loss_value(const ModelParams& params, const DenseTensor& window, Index target,
                  std::span<const double> class_weights) {
    return weighted_ce_loss(model_forward(params, window), target, class_weights);
}

long double loss_value_extended(const BasicModelParams<long double>& params, const Tensor<long double>& window,
                                Index target, std::span<const double> class_weights) {
    return weighted_ce_loss(model_forward(params, window), target, class_weights);
}

GradCheckReport finite_diff_check(const ModelParams& params, const DenseTensor& window, Index target,
                                  std::span<const double> class_weights, double step) {
    return finite_diff_check(params, window, target, class_weights, step,
                             backward(params, window, target, class_weights).grads);
}

GradCheckReport finite_diff_check(const ModelParams& params, const DenseTensor& window, Index target,
                                  std::span<const double> class_weights, double step,
                                  const GradientBundle& analytic) {
    if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive", "step");
    const std::vector<double> base = flatten(params);
    const std::vector<double> grad = flatten(analytic);
    if (grad.size() != base.size()) throw ShapeError("analytic gradient does not match parameter layout");

    double scale = 1.0;
    for (double g : grad) scale = std::max(scale, std::abs(g));
    const double floor = 1e-8 * scale;

    const bool relu = params.activation == Activation::relu && !params.tcls.empty();
    const std::vector<bool> base_pattern = relu ? relu_pattern(params, window) : std::vector<bool>{};

    // Perturbed losses are evaluated in long double; the difference quotient
    // then resolves partials far below what double roundoff over 2*step allows.
    const auto window_ext = tensor_cast<long double>(window);
    ModelParams probe = params;
    auto probe_ext = params.cast<long double>();
    std::vector<long double*> slots;
    for_each_block(probe_ext, [&](std::span<long double> block) {
        for (auto& v : block) slots.push_back(&v);
    });
    std::vector<double> values = base;

    GradCheckReport report;
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (relu) {
            bool crosses = false;
            for (double shift : {10.0 * step, -10.0 * step}) {
                values[i] = base[i] + shift;
                assign_flat(probe, values);
                if (relu_pattern(probe, window) != base_pattern) crosses = true;
            }
            values[i] = base[i];
            if (crosses) {
                ++report.excluded;
                continue;
            }
        }
        const long double x = base[i];
        *slots[i] = x + static_cast<long double>(step);
        const long double up = loss_value_extended(probe_ext, window_ext, target, class_weights);
        *slots[i] = x - static_cast<long double>(step);
        const long double down = loss_value_extended(probe_ext, window_ext, target, class_weights);
        *slots[i] = x;
        const double numeric = static_cast<double>((up - down) / (2.0L * static_cast<long double>(step)));
        const double a = grad[i];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
        report.max_abs_error = std::max(report.max_abs_error, std::abs(a - numeric));
        ++report.checked;
        if (report.worst_index < 0 || rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = static_cast<Index>(i);
        }
    }
    return report;
}

}  // namespace sttn
