#pragma once
// Dense tensor value type and the multilinear primitives the network layers
// are built from.
//
// Layout is row-major with the last index fastest. Mode indices in this API
// are 0-based: `mode_product(t, m, 0)` is the mode-1 product t x_1 m of the
// usual multilinear-algebra notation, mode 1 is x_2, and so on.

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sttn/errors.hpp"

namespace sttn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

inline std::string shape_string(std::span<const Index> shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t k = 0; k < shape.size(); ++k) os << (k ? "," : "") << shape[k];
    os << ')';
    return os.str();
}

inline Index shape_product(std::span<const Index> shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

template <typename Scalar>
class Tensor {
public:
    using FlatMap = Eigen::Map<Vector<Scalar>>;
    using ConstFlatMap = Eigen::Map<const Vector<Scalar>>;

    Tensor() : Tensor(Shape{1}) {}

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<std::size_t>(shape_product(shape_)), Scalar(0));
    }

    Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (static_cast<Index>(data_.size()) != shape_product(shape_)) {
            throw ShapeError("tensor of shape " + shape_string(shape_) + " needs " +
                             std::to_string(shape_product(shape_)) + " values, got " +
                             std::to_string(data_.size()));
        }
    }

    static Tensor constant(Shape shape, Scalar value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    Index order() const noexcept { return static_cast<Index>(shape_.size()); }
    const Shape& shape() const noexcept { return shape_; }
    Index extent(Index mode) const { return shape_.at(static_cast<std::size_t>(mode)); }
    Index size() const noexcept { return static_cast<Index>(data_.size()); }

    std::span<Scalar> data() noexcept { return data_; }
    std::span<const Scalar> data() const noexcept { return data_; }

    FlatMap flat() noexcept { return FlatMap(data_.data(), size()); }
    ConstFlatMap flat() const noexcept { return ConstFlatMap(data_.data(), size()); }

    Index offset(std::span<const Index> idx) const {
        if (static_cast<Index>(idx.size()) != order()) {
            throw ShapeError("index of order " + std::to_string(idx.size()) + " for tensor of shape " +
                             shape_string(shape_));
        }
        Index off = 0;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (idx[k] < 0 || idx[k] >= shape_[k]) {
                throw ShapeError("index " + std::to_string(idx[k]) + " out of range on mode " +
                                 std::to_string(k) + " of tensor " + shape_string(shape_));
            }
            off = off * shape_[k] + idx[k];
        }
        return off;
    }

    template <typename... I>
    Scalar& operator()(I... idx) {
        const Index arr[] = {static_cast<Index>(idx)...};
        return data_[static_cast<std::size_t>(offset(arr))];
    }

    template <typename... I>
    const Scalar& operator()(I... idx) const {
        const Index arr[] = {static_cast<Index>(idx)...};
        return data_[static_cast<std::size_t>(offset(arr))];
    }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(o, "+=");
        flat() += o.flat();
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same_shape(o, "-=");
        flat() -= o.flat();
        return *this;
    }
    Tensor& operator*=(Scalar s) {
        flat() *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, Scalar s) { return a *= s; }
    friend Tensor operator*(Scalar s, Tensor a) { return a *= s; }

    bool operator==(const Tensor&) const = default;

    void require_same_shape(const Tensor& o, const char* what) const {
        if (o.shape_ != shape_) {
            throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(shape_) + " vs " +
                             shape_string(o.shape_));
        }
    }

private:
    void validate_shape() const {
        if (shape_.empty()) throw ShapeError("tensor order must be at least 1");
        for (std::size_t k = 0; k < shape_.size(); ++k) {
            if (shape_[k] < 1) {
                throw ShapeError("extent " + std::to_string(shape_[k]) + " on mode " + std::to_string(k) +
                                 " must be positive");
            }
        }
    }

    Shape shape_;
    std::vector<Scalar> data_;
};

using DenseTensor = Tensor<double>;

namespace detail {

inline void check_mode(Index order, Index mode, const char* op) {
    if (mode < 0 || mode >= order) {
        throw ShapeError(std::string(op) + ": mode " + std::to_string(mode) + " invalid for order-" +
                         std::to_string(order) + " tensor");
    }
}

// Extents before and after `mode`; the tensor is then a stack of `left`
// row-major blocks of size shape[mode] x right.
inline std::pair<Index, Index> split_extents(const Shape& shape, Index mode) {
    Index left = 1, right = 1;
    for (Index k = 0; k < mode; ++k) left *= shape[k];
    for (Index k = mode + 1; k < static_cast<Index>(shape.size()); ++k) right *= shape[k];
    return {left, right};
}

}  // namespace detail

// t x_mode m: every mode-`mode` fiber of the result is m times the matching
// fiber of t. Requires m.cols() == t.extent(mode); the result extent on that
// mode is m.rows().
template <typename Scalar, typename Derived>
Tensor<Scalar> mode_product(const Tensor<Scalar>& t, const Eigen::MatrixBase<Derived>& m, Index mode) {
    detail::check_mode(t.order(), mode, "mode_product");
    const Index n = t.extent(mode);
    if (m.cols() != n) {
        throw ShapeError("mode_product: matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         " but mode " + std::to_string(mode) + " of tensor " + shape_string(t.shape()) +
                         " has extent " + std::to_string(n));
    }
    const auto [left, right] = detail::split_extents(t.shape(), mode);
    Shape out_shape = t.shape();
    out_shape[static_cast<std::size_t>(mode)] = m.rows();
    Tensor<Scalar> out(std::move(out_shape));

    using Block = Eigen::Map<const Matrix<Scalar>>;
    using OutBlock = Eigen::Map<Matrix<Scalar>>;
    const Matrix<Scalar> mm = m;
    for (Index l = 0; l < left; ++l) {
        Block in(t.data().data() + l * n * right, n, right);
        OutBlock o(out.data().data() + l * mm.rows() * right, mm.rows(), right);
        o.noalias() = mm * in;
    }
    return out;
}

// Sum over blocks of a(block) * b(block)^T where a and b share every extent
// except `mode`. This is the gradient of mode_product with respect to its
// matrix: if Z = H x_mode M then dL/dM = mode_gram(dL/dZ, H, mode).
template <typename Scalar>
Matrix<Scalar> mode_gram(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Index mode) {
    detail::check_mode(a.order(), mode, "mode_gram");
    if (a.order() != b.order()) throw ShapeError("mode_gram: order mismatch");
    for (Index k = 0; k < a.order(); ++k) {
        if (k != mode && a.extent(k) != b.extent(k)) {
            throw ShapeError("mode_gram: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                             " differ outside mode " + std::to_string(mode));
        }
    }
    const auto [left, right] = detail::split_extents(a.shape(), mode);
    const Index na = a.extent(mode), nb = b.extent(mode);
    Matrix<Scalar> g = Matrix<Scalar>::Zero(na, nb);
    using Block = Eigen::Map<const Matrix<Scalar>>;
    for (Index l = 0; l < left; ++l) {
        Block ab(a.data().data() + l * na * right, na, right);
        Block bb(b.data().data() + l * nb * right, nb, right);
        g.noalias() += ab * bb.transpose();
    }
    return g;
}

// Mode-`mode` matricization: a shape[mode] x (product of other extents)
// matrix. Columns enumerate the remaining indices in row-major order.
template <typename Scalar>
Matrix<Scalar> unfold(const Tensor<Scalar>& t, Index mode) {
    detail::check_mode(t.order(), mode, "unfold");
    const auto [left, right] = detail::split_extents(t.shape(), mode);
    const Index n = t.extent(mode);
    Matrix<Scalar> out(n, left * right);
    using Block = Eigen::Map<const Matrix<Scalar>>;
    for (Index l = 0; l < left; ++l) {
        out.middleCols(l * right, right) = Block(t.data().data() + l * n * right, n, right);
    }
    return out;
}

// Inverse of unfold for the given target shape.
template <typename Scalar, typename Derived>
Tensor<Scalar> fold(const Eigen::MatrixBase<Derived>& m, Index mode, Shape shape) {
    Tensor<Scalar> out(std::move(shape));
    detail::check_mode(out.order(), mode, "fold");
    const auto [left, right] = detail::split_extents(out.shape(), mode);
    const Index n = out.extent(mode);
    if (m.rows() != n || m.cols() != left * right) {
        throw ShapeError("fold: " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         " matrix does not unfold shape " + shape_string(out.shape()) + " on mode " +
                         std::to_string(mode));
    }
    using Block = Eigen::Map<Matrix<Scalar>>;
    for (Index l = 0; l < left; ++l) {
        Block(out.data().data() + l * n * right, n, right) = m.middleCols(l * right, right);
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> outer_product3(const Vector<Scalar>& a, const Vector<Scalar>& b, const Vector<Scalar>& c) {
    if (a.size() == 0 || b.size() == 0 || c.size() == 0) {
        throw ShapeError("outer_product3: empty input vector");
    }
    Tensor<Scalar> out(Shape{a.size(), b.size(), c.size()});
    auto d = out.data();
    Index p = 0;
    for (Index i = 0; i < a.size(); ++i)
        for (Index j = 0; j < b.size(); ++j) {
            const Scalar ab = a[i] * b[j];
            for (Index k = 0; k < c.size(); ++k) d[p++] = ab * c[k];
        }
    return out;
}

template <typename Scalar>
Scalar inner_product(const Tensor<Scalar>& t1, const Tensor<Scalar>& t2) {
    t1.require_same_shape(t2, "inner_product");
    return t1.flat().dot(t2.flat());
}

// core x_1 factors[0] x_2 factors[1] ... ; factors[k].cols() must equal
// core.extent(k).
template <typename Scalar>
Tensor<Scalar> tucker_reconstruct(const Tensor<Scalar>& core, std::span<const Matrix<Scalar>> factors) {
    if (static_cast<Index>(factors.size()) != core.order()) {
        throw ShapeError("tucker_reconstruct: " + std::to_string(factors.size()) + " factors for order-" +
                         std::to_string(core.order()) + " core");
    }
    Tensor<Scalar> out = core;
    for (Index k = 0; k < core.order(); ++k) out = mode_product(out, factors[static_cast<std::size_t>(k)], k);
    return out;
}

// Elementwise map into a fresh tensor of the same shape.
template <typename Scalar, typename F>
Tensor<Scalar> map(const Tensor<Scalar>& t, F&& f) {
    Tensor<Scalar> out = t;
    for (auto& v : out.data()) v = f(v);
    return out;
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
    return t.flat().allFinite();
}

}  // namespace sttn
