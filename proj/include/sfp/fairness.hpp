#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sfp/linalg.hpp"

namespace sfp {

struct GroupedPredictions {
    Matrix probs;            // n x K row-stochastic scores
    std::vector<int> labels; // hard class labels; empty when unavailable
    std::vector<int> z;      // binary group indicator
};

/// Group gap of mean predicted scores over the first K-1 classes, in percent.
double dp_gap(const GroupedPredictions& gp);

struct TprGap {
    double value = 0.0;
    int skipped_classes = 0; // classes without positives in one of the groups
};

/// Group gap of per-class true-positive rates (argmax predictions), percent.
TprGap tpr_gap(const GroupedPredictions& gp);

/// Aggregated exact Kolmogorov-Smirnov distance between group-wise score
/// distributions over the first K-1 classes, in percent.
double mcdp(const GroupedPredictions& gp);

// Squared distance covariance, V-statistic form S1 + S2 - 2 S3 with Euclidean
// norms over rows of f. Samples larger than n_cap are subsampled
// deterministically from the given seed.
double dcov2(const Matrix& f, const std::vector<int>& z, Index n_cap = 2000,
             std::uint64_t seed = 0);

// Binary-group closed form 2 p²(1-p)² (2 E|f0-f1| - E|f0-f0'| - E|f1-f1'|),
// every expectation taken as a V-statistic on the same sample; algebraically
// identical to dcov2 on binary z.
double dcov2_binary_form(const Matrix& f, const std::vector<int>& z, Index n_cap = 2000,
                         std::uint64_t seed = 0);

/// Exact 1-D 1-Wasserstein distance between empirical measures.
double wasserstein1(const std::vector<double>& a, const std::vector<double>& b);
double wasserstein1(const Vector& a, const Vector& b);

// Fisher discriminant direction (S_w + ridge * tr(S_w)/p * I)^{-1} (mu1 - mu0),
// unit norm, oriented toward the group-1 mean.
Vector lda_direction(const Matrix& X, const std::vector<int>& z, double ridge = kDefaultRidge);

} // namespace sfp
