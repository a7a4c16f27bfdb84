#pragma once

#include <cmath>
#include <span>

#include "sttn/tensor.hpp"

namespace sttn {

namespace detail {

template <typename Scalar>
void check_target(const Vector<Scalar>& logits, Index target, std::size_t weight_count) {
    if (target < 0 || target >= logits.size()) {
        throw ShapeError("target class " + std::to_string(target) + " out of range for " +
                         std::to_string(logits.size()) + " logits");
    }
    if (static_cast<Index>(weight_count) != logits.size()) {
        throw ShapeError(std::to_string(weight_count) + " class weights for " + std::to_string(logits.size()) +
                         " logits");
    }
}

}  // namespace detail

// Max-subtracted softmax.
template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& logits) {
    Vector<Scalar> e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

// -w[target] * log softmax(logits)[target], evaluated as
// w[target] * ((max - x_target) + log1p(sum over l != argmax of exp(x_l - max)))
// so large logits never overflow and tiny losses keep full relative precision.
template <typename Scalar>
Scalar weighted_ce_loss(const Vector<Scalar>& logits, Index target, std::span<const double> class_weights) {
    using std::exp, std::log1p;
    detail::check_target(logits, target, class_weights.size());
    Index top = 0;
    const Scalar mx = logits.maxCoeff(&top);
    Scalar tail = 0;
    for (Index l = 0; l < logits.size(); ++l)
        if (l != top) tail += exp(logits[l] - mx);
    return static_cast<Scalar>(class_weights[static_cast<std::size_t>(target)]) *
           ((mx - logits[target]) + log1p(tail));
}

// d loss / d logits = w[target] * (softmax - onehot(target)).
template <typename Scalar>
Vector<Scalar> weighted_ce_logit_grad(const Vector<Scalar>& logits, Index target,
                                      std::span<const double> class_weights) {
    detail::check_target(logits, target, class_weights.size());
    Vector<Scalar> g = softmax(logits);
    g[target] -= Scalar(1);
    return g * static_cast<Scalar>(class_weights[static_cast<std::size_t>(target)]);
}

}  // namespace sttn
