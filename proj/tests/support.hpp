#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "sttn/random.hpp"
#include "sttn/tensor.hpp"

namespace sttn::test {

inline DenseTensor random_tensor(SplitMix64& rng, Shape shape, double scale = 1.0) {
    DenseTensor t(std::move(shape));
    for (double& x : t.data()) x = scale * rng.normal();
    return t;
}

inline MatrixXd random_matrix(SplitMix64& rng, Index rows, Index cols, double scale = 1.0) {
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

inline VectorXd random_vector(SplitMix64& rng, Index n, double scale = 1.0) {
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
    return v;
}

inline Index random_extent(SplitMix64& rng, Index lo, Index hi) {
    return lo + static_cast<Index>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

inline double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("sttn_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace sttn::test
