#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sfp/sdr.hpp"

namespace sfp {

struct DecompositionConfig {
    SdrMethod method = SdrMethod::SAVE;
    int H = 0;           // 0 = p + 1
    int bootstrap_B = 30;
    int kmax = 0;        // 0 = min(p - 2, 12)
    double ridge = kDefaultRidge;
    std::uint64_t seed = 0;

    int slices_for(Index p) const { return H > 0 ? H : static_cast<int>(p) + 1; }
    int kmax_for(Index p) const {
        const int def = static_cast<int>(std::min<Index>(p - 2, 12));
        return kmax > 0 ? kmax : std::max(def, 1);
    }
};

/// Symmetrized cross matrix (M_Y Sigma M_Z + transpose) / 2.
SymMatrix cross_candidate(const SymMatrix& M_Y, const SymMatrix& Sigma, const SymMatrix& M_Z);

using MatrixBuilder = std::function<SymMatrix(const std::vector<Index>&)>;

// Rank selection by the ladle: combines scaled eigenvalues of the full-data
// matrix with the bootstrap variability of leading eigenspaces. builder maps
// a multiset of row indices to the candidate matrix; replicate b draws its
// indices from stream (seed, b). Returns argmin over k in [0, kmax].
int ladle_rank(const MatrixBuilder& builder, Index n, int B, int kmax, std::uint64_t seed,
               int threads = 0);

// Top-s generalized eigenvectors of (cross_candidate, Sigma), re-orthonormalized
// in the Euclidean sense preserving the eigenvalue order.
OrthonormalBasis intersection_basis(const SymMatrix& M_Y, const SymMatrix& M_Z,
                                    const SymMatrix& Sigma, int s, double ridge = kDefaultRidge);

/// I - Psi Psiᵀ.
SymMatrix residual_projection(const OrthonormalBasis& Psi);

// SDR on (Y, Q_z X): computed in an orthonormal basis of span(Q_z) so the
// covariance stays full rank, rank chosen by the ladle, result mapped back
// (exactly inside span(Q_z)).
OrthonormalBasis unshared_basis(const Matrix& Y, const Matrix& X, const SymMatrix& Q_z,
                                const DecompositionConfig& config, bool y_discrete,
                                int threads = 0);

struct FairProjectionFamily {
    OrthonormalBasis unshared;  // rank d_hat, inside span(Q_z)
    OrthonormalBasis shared;    // columns ordered by descending cross-matrix eigenvalue
    Vector shared_eigenvalues;  // generalized eigenvalues matching `shared`
    int s_hat = 0;              // = shared.rank()
    int r_hat = 0;              // sensitive-subspace rank used for Q_z
    int d_hat = 0;              // = unshared.rank()
    std::vector<std::string> warnings;

    int s() const { return s_hat; }
    Index dim() const { return unshared.dim(); }
    /// P^(m) = unshared unsharedᵀ + Phi_m Phi_mᵀ, for m in [0, s].
    Matrix projection(int m) const;
};

// Full estimation pipeline: candidate matrices, cross matrix, ladle ranks,
// shared directions, complement projection, unshared directions. Y is a
// continuous multi-output (k-means slices) unless y_discrete, in which case
// one slice per label level. Z takes one slice per level always.
FairProjectionFamily estimate_family(const Matrix& X, const Matrix& Y, const std::vector<int>& Z,
                                     const DecompositionConfig& config, bool y_discrete,
                                     int threads = 0);

} // namespace sfp
