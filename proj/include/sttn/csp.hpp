#pragma once
// Classical two-class common spatial patterns: trace-normalized covariances,
// class averages, and the generalized eigenproblem R1 w = lambda R2 w.
// Used as a reference for the trainable layer and as an optional warm start.

#include <cstdint>
#include <span>
#include <vector>

#include "sttn/layers.hpp"

namespace sttn {

struct CspFilter {
    MatrixXd w;            // M x C, unit-norm rows
    VectorXd eigenvalues;  // generalized eigenvalue of each row
};

// S S^T / trace(S S^T) of the channel-mean-centered C x T signal.
MatrixXd normalized_covariance(const MatrixXd& signal);

struct ClassCovariances {
    MatrixXd first;   // mean normalized covariance of label 0
    MatrixXd second;  // mean normalized covariance of label 1
};

// Labels are 0 (first class, numerator of R2^-1 R1) or 1 (second class).
ClassCovariances class_mean_covariance(std::span<const MatrixXd> samples, std::span<const int> labels);

// Rows: eigenvectors of the m largest eigenvalues in descending order, then
// the m smallest in ascending order. Equal eigenvalues keep the solver's
// ascending index order. Each row has unit norm and a positive first
// nonzero component. R2 receives a 1e-9 ridge when its condition number
// exceeds 1e12.
CspFilter fit_csp(const ClassCovariances& cov, Index m);
CspFilter fit_csp(std::span<const MatrixXd> samples, std::span<const int> labels, Index m);

// ||R1 w - lambda R2 w|| for one filter row.
double generalized_eigen_residual(const ClassCovariances& cov, const VectorXd& w, double lambda);

VectorXd csp_features(const CspFilter& filter, const MatrixXd& signal);

// Copies one binary CSP solution per modality into the trainable layer.
// Windows with label `positive_class` form the first class, all others the
// second. Requires the layer's M to be even; m = M / 2.
void warm_start_csp(CspLayerParams& layer, std::span<const DenseTensor> windows, std::span<const Index> labels,
                    Index positive_class);

// Two-class variance-contrast task: C x T Gaussian sources mixed by one
// fixed random matrix; in class 0 the source `boosted_channel` has its
// standard deviation multiplied by `boost`.
struct VarianceContrastTask {
    std::vector<MatrixXd> samples;
    std::vector<int> labels;
};

VarianceContrastTask generate_variance_contrast(Index channels, Index steps, Index per_class, double boost,
                                                Index boosted_channel, std::uint64_t seed);

}  // namespace sttn
