#pragma once
// Reverse-mode derivatives of the weighted cross-entropy loss with respect to
// every model parameter, and a central-difference checker.

#include <span>
#include <string>

#include "sttn/layers.hpp"

namespace sttn {

struct LossAndGradient {
    double loss = 0.0;
    GradientBundle grads;
};

LossAndGradient backward(const ModelParams& params, const DenseTensor& window, Index target,
                         std::span<const double> class_weights);

double loss_value(const ModelParams& params, const DenseTensor& window, Index target,
                  std::span<const double> class_weights);

// Backward pass of contract_transposed: accumulates factor gradients into
// `dfactors` and returns the gradient with respect to the contraction input.
DenseTensor contract_transposed_backward(const ContractTrace<double>& trace, const std::array<MatrixXd, 3>& factors,
                                         DenseTensor d_output, std::array<MatrixXd, 3>& dfactors);

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    Index worst_index = -1;  // flat parameter index of the worst coordinate
    Index checked = 0;
    Index excluded = 0;      // relu coordinates skipped near a kink
};

// Perturbs every parameter by +-step and compares the central difference
// with the analytic gradient. Relative error per coordinate is
// |a - n| / max(|a|, |n|, 1e-8 * max(1, max_k |a_k|)); the floor keeps
// partials that are zero up to roundoff from dominating. For relu models a coordinate is excluded
// when moving it by 10*step flips the sign of any pre-activation.
GradCheckReport finite_diff_check(const ModelParams& params, const DenseTensor& window, Index target,
                                  std::span<const double> class_weights, double step);

// Same check against a caller-supplied analytic gradient.
GradCheckReport finite_diff_check(const ModelParams& params, const DenseTensor& window, Index target,
                                  std::span<const double> class_weights, double step,
                                  const GradientBundle& analytic);

}  // namespace sttn
