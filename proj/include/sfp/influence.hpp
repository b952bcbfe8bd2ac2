#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sfp/data.hpp"
#include "sfp/decomposition.hpp"
#include "sfp/predictors.hpp"
#include "sfp/report.hpp"

namespace sfp {

// A statistical functional evaluated on the weighted empirical distribution;
// weights are non-negative and sum to one up to the contamination being probed.
using WeightedFunctional = std::function<Matrix(const Vector&)>;

// Central Gateaux difference: re-estimates the functional under +/- eps
// point-mass contamination at sample `point` and returns the scaled
// difference. Exact for functionals linear in the distribution.
Matrix gateaux_fd(const WeightedFunctional& functional, Index n, Index point, double eps = 1e-5);

// First-order eigenvector perturbation sum_{j != i, j < k_total}
// v_j v_jᵀ M* v_i / (lambda_i - lambda_j) over the eigenpairs of M.
// Indices are 0-based; gaps below 1e-8 abort.
Vector eigvec_if(const SymMatrix& M, const SymMatrix& M_star, int i, int k_total);

struct ProjectionIfInputs {
    SymMatrix M_Y;       // target candidate matrix
    SymMatrix M_Z;       // sensitive candidate matrix
    SymMatrix M_YZ;      // symmetrized cross matrix
    SymMatrix M_Y_star;  // influence matrices at the probed point
    SymMatrix M_Z_star;
    SymMatrix M_YZ_star;
    int q_block = 0;     // leading M_Y eigenvectors entering the unshared block
    int r_block = 0;     // leading M_Z eigenvectors defining Q_z
    int s_block = 0;     // leading cross eigenvectors (shared directions)
    int m = 0;           // retained shared directions
};

// Influence of P^(m) assembled from the eigenvector perturbation pieces:
// Q_z* = -sum_j (psi_j* psi_jᵀ + psi_j psi_j*ᵀ),
// (Q_z beta_k)* = Q_z beta_k* + Q_z* beta_k, and rank-one product rules for
// the two blocks of P^(m).
SymMatrix projection_if(const ProjectionIfInputs& in);

/// Lemma-style product rule for the cross-matrix influence, symmetrized.
SymMatrix cross_if(const SymMatrix& M_Y, const SymMatrix& Sigma, const SymMatrix& M_Z,
                   const SymMatrix& M_Y_star, const SymMatrix& Sigma_star,
                   const SymMatrix& M_Z_star);

// Weighted re-estimation context for the fair-projection functional at fixed
// ranks and fixed response partitions.
class FamilyFunctional {
public:
    FamilyFunctional(const Matrix& X, const Matrix& Y, const std::vector<int>& Z,
                     SdrMethod method, int H, double ridge, int r_block, int s_block,
                     int d_block, std::uint64_t seed, bool y_discrete = false);

    Index n() const { return X_.rows(); }
    Index p() const { return X_.cols(); }

    SymMatrix candidate_y(const Vector& w) const;
    SymMatrix candidate_z(const Vector& w) const;
    SymMatrix covariance_fn(const Vector& w) const;
    SymMatrix cross(const Vector& w) const;
    /// Full weighted re-estimation of P^(m) at the fixed ranks.
    Matrix projection(const Vector& w, int m) const;

    // Appendix-style assembly: candidate influences by Gateaux differences,
    // cross influence by the product rule, eigenvector pieces in closed form.
    SymMatrix projection_if_at(Index point, int m, double eps = 1e-5) const;
    /// Same functional differentiated end-to-end by Gateaux differences.
    SymMatrix projection_fd_at(Index point, int m, double eps = 1e-5) const;

    int r_block() const { return r_block_; }
    int s_block() const { return s_block_; }
    int d_block() const { return d_block_; }

private:
    Matrix X_;
    Matrix Ylab_; // response matrix handed to the slicer
    Matrix Zlab_;
    SdrMethod method_;
    double ridge_;
    int r_block_, s_block_, d_block_;
    ResponsePartition y_part_;
    ResponsePartition z_part_;
};

// Per-sample influence of the linear-model parameters fitted on P X:
// -H^{-1} grad_i plus the projection sensitivity contracted with vec(P*).
// The sensitivity is differenced along the direction P* itself: tangent
// directions keep the refit on the projector manifold, where the
// ridge-regularized least-squares map stays smooth (entrywise probes leave
// the manifold and are numerically stiff for rank-deficient features).
struct LinearThetaInfluence {
    LinearThetaInfluence(const Matrix& X, const Matrix& Y, const Matrix& P, double fd_step = 1e-4);

    const LinearModel& model() const { return model_; }
    Index param_count() const { return Hinv_.rows(); }
    /// -H^{-1} grad_i (P held fixed).
    Vector base_term(Index i) const;
    /// Full influence with the projection contribution.
    Vector evaluate(Index i, const Matrix& P_star) const;

private:
    Matrix X_, Y_, P_, XP_;
    LinearModel model_;
    Matrix Hinv_;
    double fd_step_;
};

/// Skew/kurtosis omnibus normality test; returns the p-value.
double dagostino_k2_pvalue(const std::vector<double>& sample);

struct AsymptoticReport {
    std::string functional;
    std::vector<Index> n_list;
    std::vector<Vector> sd_per_n;        // per-coordinate sd at each n
    std::vector<Vector> scaling_ratios;  // sd(n_i) / sd(n_{i+1})
    std::vector<Vector> normality_pvalues;
    Vector plugin_sd;                    // sqrt((1/n) Var(theta_if)) at the largest n
    Vector theta_ref;                    // long-run parameter estimate
    Json to_json() const;
};

struct McEstimatorSpec {
    int m = 0;
    int r_block = 8;
    int s_block = 6;
    int d_block = 2;
    bool with_plugin = true;
};

// Monte Carlo study of the fair estimator: per-n coordinate sds over
// replications, sd scaling between consecutive n, D'Agostino normality
// p-values, and the influence-function plug-in sd for comparison.
AsymptoticReport mc_normality(const SynthConfig& dgp, const McEstimatorSpec& estimator,
                              const std::vector<Index>& n_list, int replications,
                              std::uint64_t seed, int threads = 0);

} // namespace sfp
