#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfp/linalg.hpp"

namespace sfp {

enum class SliceStrategy { Quantile, Category, KMeans };
enum class SdrMethod { SIR, SAVE };

std::string to_string(SliceStrategy s);
std::string to_string(SdrMethod m);

struct SliceAssignment {
    std::vector<int> labels; // one slice id per sample, in [0, H)
    std::vector<int> counts; // per-slice sample counts, all positive
    SliceStrategy strategy = SliceStrategy::Category;

    int slice_count() const { return static_cast<int>(counts.size()); }
};

// A slicing rule fitted once and reusable on resampled or reweighted data:
// quantile bin edges, category value table, or k-means centers. Keeping the
// partition fixed is what makes bootstrap and reweighted re-estimation
// measure sampling variability only.
class ResponsePartition {
public:
    static ResponsePartition fit(const Matrix& R, int H, SliceStrategy strategy,
                                 std::uint64_t seed = 0);

    SliceAssignment assign(const Matrix& R) const;
    SliceStrategy strategy() const { return strategy_; }
    int slice_count() const;

private:
    SliceStrategy strategy_ = SliceStrategy::Category;
    std::vector<double> edges_;     // quantile: upper edges of the first H-1 bins
    std::vector<double> categories_; // category: sorted distinct values
    Matrix centers_;                // k-means: H x k
};

// Direct slicing of a response sample. Quantile slices are equal-count with
// ties broken by (value, index); categorical responses get one slice per
// level; multivariate continuous responses are sliced by seeded k-means
// (k-means++ init, 50 Lloyd iterations, empty clusters reseeded at the
// farthest point).
SliceAssignment slice_response(const Matrix& R, int H, SliceStrategy strategy,
                               std::uint64_t seed = 0);

/// Unbiased sample covariance (divisor n-1) of column-centered X.
SymMatrix covariance(const Matrix& X);

struct CandidateEstimate {
    SymMatrix M;       // candidate matrix in original X coordinates
    EigenPairs eigen;  // eigendecomposition of M
    SdrMethod method;
    SliceAssignment slices;
    std::vector<std::string> warnings;
};

// Slice-mean candidate: M = S^{-1/2} [sum_h (n_h/n) m̄_h m̄_hᵀ] S^{-1/2} with
// m̄_h slice means of the standardized covariates.
CandidateEstimate sir_candidate(const Matrix& X, const SliceAssignment& slices,
                                double ridge = kDefaultRidge);

// Slice-covariance candidate: M = S^{-1/2} [sum_h (n_h/n) (I - V̂_h)²] S^{-1/2}
// with V̂_h the within-slice covariance of the standardized covariates.
CandidateEstimate save_candidate(const Matrix& X, const SliceAssignment& slices,
                                 double ridge = kDefaultRidge);

// Weighted variants used for influence computations. These follow the
// population (V-statistic) convention: weighted means/covariances with no
// n-1 correction, slice proportions = normalized weight mass per slice.
Vector weighted_mean(const Matrix& X, const Vector& w);
SymMatrix weighted_covariance(const Matrix& X, const Vector& w);
SymMatrix sir_matrix_weighted(const Matrix& X, const SliceAssignment& slices, const Vector& w,
                              double ridge = kDefaultRidge);
SymMatrix save_matrix_weighted(const Matrix& X, const SliceAssignment& slices, const Vector& w,
                               double ridge = kDefaultRidge);
SymMatrix candidate_matrix_weighted(SdrMethod method, const Matrix& X,
                                    const SliceAssignment& slices, const Vector& w,
                                    double ridge = kDefaultRidge);

} // namespace sfp
