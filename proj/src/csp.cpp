#include "sttn/csp.hpp"

#include <algorithm>
#include <numeric>

#include "sttn/random.hpp"

namespace sttn {

namespace {

constexpr double kRidge = 1e-9;
constexpr double kMaxCondition = 1e12;
constexpr double kResidualTolerance = 1e-8;

void orient(VectorXd& v) {
    v.normalize();
    const double scale = v.cwiseAbs().maxCoeff();
    for (Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > 1e-12 * scale) {
            if (v[i] < 0) v = -v;
            return;
        }
    }
}

}  // namespace

MatrixXd normalized_covariance(const MatrixXd& signal) {
    if (signal.cols() < 2) throw DataError("normalized_covariance: window needs at least 2 time steps");
    if (!signal.allFinite()) throw DataError("normalized_covariance: non-finite signal");
    const MatrixXd centered = signal.colwise() - signal.rowwise().mean();
    const MatrixXd r = centered * centered.transpose();
    const double tr = r.trace();
    if (tr <= 1e-12) throw DataError("normalized_covariance: degenerate sample (zero energy)");
    return r / tr;
}

ClassCovariances class_mean_covariance(std::span<const MatrixXd> samples, std::span<const int> labels) {
    if (samples.size() != labels.size()) throw ShapeError("class_mean_covariance: samples and labels differ in length");
    if (samples.empty()) throw DataError("class_mean_covariance: no samples");
    const Index c = samples.front().rows();
    ClassCovariances out{MatrixXd::Zero(c, c), MatrixXd::Zero(c, c)};
    std::array<Index, 2> counts{0, 0};
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw DataError("class_mean_covariance: labels must be 0 or 1");
        if (samples[i].rows() != c) throw ShapeError("class_mean_covariance: channel counts differ");
        (labels[i] == 0 ? out.first : out.second) += normalized_covariance(samples[i]);
        ++counts[static_cast<std::size_t>(labels[i])];
    }
    if (counts[0] == 0 || counts[1] == 0) throw DataError("class_mean_covariance: a class has no samples");
    out.first /= static_cast<double>(counts[0]);
    out.second /= static_cast<double>(counts[1]);
    return out;
}

double generalized_eigen_residual(const ClassCovariances& cov, const VectorXd& w, double lambda) {
    return (cov.first * w - lambda * (cov.second * w)).norm();
}

CspFilter fit_csp(const ClassCovariances& cov, Index m) {
    const Index c = cov.first.rows();
    if (cov.first.cols() != c || cov.second.rows() != c || cov.second.cols() != c) {
        throw ShapeError("fit_csp: class covariances must be square and equal-sized");
    }
    if (m < 1 || 2 * m >= c) {
        throw ConfigError("fit_csp: need 1 <= m and 2m < C (m=" + std::to_string(m) + ", C=" + std::to_string(c) + ")",
                          "m");
    }
    ClassCovariances work = cov;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> spectrum(Eigen::MatrixXd(work.second), Eigen::EigenvaluesOnly);
    const double lo = spectrum.eigenvalues().minCoeff(), hi = spectrum.eigenvalues().maxCoeff();
    if (lo <= 0.0 || hi / lo > kMaxCondition) work.second += kRidge * MatrixXd::Identity(c, c);

    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(work.first),
                                                                     Eigen::MatrixXd(work.second));
    if (solver.info() != Eigen::Success) throw NumericError("fit_csp", "generalized eigensolver did not converge");

    const VectorXd& values = solver.eigenvalues();  // ascending
    std::vector<Index> order(static_cast<std::size_t>(c));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] > values[b]; });

    std::vector<Index> picked(order.begin(), order.begin() + m);
    for (Index k = 0; k < m; ++k) picked.push_back(order[static_cast<std::size_t>(c - 1 - k)]);

    CspFilter f{MatrixXd(2 * m, c), VectorXd(2 * m)};
    for (Index r = 0; r < 2 * m; ++r) {
        const Index src = picked[static_cast<std::size_t>(r)];
        VectorXd v = solver.eigenvectors().col(src);
        orient(v);
        const double lambda = values[src];
        if (generalized_eigen_residual(work, v, lambda) > kResidualTolerance) {
            throw NumericError("fit_csp", "eigenvector residual exceeds tolerance");
        }
        f.w.row(r) = v.transpose();
        f.eigenvalues[r] = lambda;
    }
    return f;
}

CspFilter fit_csp(std::span<const MatrixXd> samples, std::span<const int> labels, Index m) {
    return fit_csp(class_mean_covariance(samples, labels), m);
}

VectorXd csp_features(const CspFilter& filter, const MatrixXd& signal) {
    if (signal.cols() < 2) throw DataError("csp_features: window needs at least 2 time steps");
    return csp_features<double>(filter.w, signal);
}

void warm_start_csp(CspLayerParams& layer, std::span<const DenseTensor> windows, std::span<const Index> labels,
                    Index positive_class) {
    const Index m_total = layer.w[0].rows();
    if (m_total % 2 != 0) throw ConfigError("CSP warm start needs an even feature dimension M", "feature_dim");
    if (windows.size() != labels.size()) throw ShapeError("warm_start_csp: windows and labels differ in length");
    for (int j = 0; j < kModalities; ++j) {
        std::vector<MatrixXd> samples;
        std::vector<int> binary;
        for (std::size_t i = 0; i < windows.size(); ++i) {
            samples.push_back(modality_matrix(windows[i], j));
            binary.push_back(labels[i] == positive_class ? 0 : 1);
        }
        layer.w[j] = fit_csp(samples, binary, m_total / 2).w;
    }
}

VarianceContrastTask generate_variance_contrast(Index channels, Index steps, Index per_class, double boost,
                                                Index boosted_channel, std::uint64_t seed) {
    if (channels < 2 || steps < 2 || per_class < 1 || boosted_channel < 0 || boosted_channel >= channels) {
        throw ConfigError("generate_variance_contrast: invalid extents");
    }
    SplitMix64 rng(seed);
    MatrixXd mixing(channels, channels);
    for (Index i = 0; i < channels; ++i)
        for (Index k = 0; k < channels; ++k) mixing(i, k) = (i == k ? 1.0 : 0.0) + 0.3 * rng.normal();

    VarianceContrastTask task;
    for (Index n = 0; n < 2 * per_class; ++n) {
        const int label = static_cast<int>(n % 2);
        MatrixXd sources(channels, steps);
        for (Index i = 0; i < channels; ++i)
            for (Index t = 0; t < steps; ++t) sources(i, t) = rng.normal();
        if (label == 0) sources.row(boosted_channel) *= boost;
        task.samples.push_back(mixing * sources);
        task.labels.push_back(label);
    }
    return task;
}

}  // namespace sttn
