#include "sfp/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sfp/parallel.hpp"
#include "sfp/rng.hpp"

namespace sfp {

SymMatrix cross_candidate(const SymMatrix& M_Y, const SymMatrix& Sigma, const SymMatrix& M_Z) {
    if (M_Y.dim() != Sigma.dim() || M_Z.dim() != Sigma.dim()) {
        throw DimensionError("cross_candidate: dimension mismatch");
    }
    return SymMatrix(M_Y.mat() * Sigma.mat() * M_Z.mat());
}

int ladle_rank(const MatrixBuilder& builder, Index n, int B, int kmax, std::uint64_t seed,
               int threads) {
    if (B < 1) throw InputError("ladle_rank: B must be >= 1");
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    const SymMatrix M = builder(all);
    const Index p = M.dim();
    if (kmax < 1 || kmax > p - 1) throw DimensionError("ladle_rank: kmax out of range");

    if (M.mat().cwiseAbs().maxCoeff() < 1e-12) return 0;

    const EigenPairs full = sym_eig(M);
    const Matrix& V = full.vectors.cols();

    std::vector<Vector> contrib(static_cast<std::size_t>(B));
    parallel_for(B, [&](int b) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(b));
        std::vector<Index> idx(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
        const EigenPairs rep = sym_eig(builder(idx));
        Vector f = Vector::Zero(kmax + 1);
        for (int k = 1; k <= kmax; ++k) {
            const Matrix D = V.leftCols(k).transpose() * rep.vectors.cols().leftCols(k);
            f(k) = 1.0 - std::abs(D.determinant());
        }
        contrib[static_cast<std::size_t>(b)] = std::move(f);
    }, threads);

    Vector f0 = Vector::Zero(kmax + 1);
    for (const Vector& f : contrib) f0 += f;
    f0 /= static_cast<double>(B);
    const Vector fn = f0 / (1.0 + f0.sum());

    Vector lam = full.values.cwiseMax(0.0);
    double denom = 1.0;
    for (int j = 0; j <= kmax + 1 && j < static_cast<int>(p); ++j) denom += lam(j);
    int best = 0;
    double best_g = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= kmax; ++k) {
        const double g = fn(k) + lam(k) / denom;
        if (g < best_g) {
            best_g = g;
            best = k;
        }
    }
    return best;
}

OrthonormalBasis intersection_basis(const SymMatrix& M_Y, const SymMatrix& M_Z,
                                    const SymMatrix& Sigma, int s, double ridge) {
    const SymMatrix C = cross_candidate(M_Y, Sigma, M_Z);
    if (s == 0) return OrthonormalBasis::empty(C.dim());
    const EigenPairs ep = gen_eig(C, Sigma, ridge);
    const double scale = std::max(1.0, ep.values.cwiseAbs().maxCoeff());
    int positive = 0;
    for (Index i = 0; i < ep.values.size(); ++i) {
        if (ep.values(i) > 1e-10 * scale) ++positive;
    }
    if (s > positive) {
        throw DimensionError("intersection_basis: requested rank exceeds positive eigenvalue count");
    }
    return orthonormalize_ordered(ep.vectors.cols().leftCols(s));
}

SymMatrix residual_projection(const OrthonormalBasis& Psi) {
    const Matrix P = projection(Psi).mat();
    return SymMatrix(Matrix::Identity(Psi.dim(), Psi.dim()) - P);
}

namespace {

// Orthonormal basis of range(Q) for an (approximately) idempotent symmetric Q:
// eigenvectors with eigenvalue above 1/2.
OrthonormalBasis range_basis(const SymMatrix& Q) {
    const EigenPairs ep = sym_eig(Q);
    Index rank = 0;
    while (rank < ep.values.size() && ep.values(rank) > 0.5) ++rank;
    return OrthonormalBasis(ep.vectors.cols().leftCols(rank));
}

ResponsePartition fit_y_partition(const Matrix& Y, const DecompositionConfig& config,
                                  bool y_discrete, Index p) {
    if (y_discrete) {
        // label per row = argmax column
        Matrix labels(Y.rows(), 1);
        for (Index i = 0; i < Y.rows(); ++i) {
            Index arg = 0;
            Y.row(i).maxCoeff(&arg);
            labels(i, 0) = static_cast<double>(arg);
        }
        return ResponsePartition::fit(labels, 0, SliceStrategy::Category);
    }
    if (Y.cols() == 1) {
        return ResponsePartition::fit(Y, config.slices_for(p), SliceStrategy::Quantile);
    }
    return ResponsePartition::fit(Y, config.slices_for(p), SliceStrategy::KMeans, config.seed);
}

Matrix y_labels_matrix(const Matrix& Y, bool y_discrete) {
    if (!y_discrete) return Y;
    Matrix labels(Y.rows(), 1);
    for (Index i = 0; i < Y.rows(); ++i) {
        Index arg = 0;
        Y.row(i).maxCoeff(&arg);
        labels(i, 0) = static_cast<double>(arg);
    }
    return labels;
}

Matrix take_rows(const Matrix& X, const std::vector<Index>& idx) {
    Matrix out(static_cast<Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = X.row(idx[i]);
    return out;
}

CandidateEstimate build_candidate(SdrMethod method, const Matrix& X, const SliceAssignment& slices,
                                  double ridge) {
    return method == SdrMethod::SIR ? sir_candidate(X, slices, ridge)
                                    : save_candidate(X, slices, ridge);
}

} // namespace

OrthonormalBasis unshared_basis(const Matrix& Y, const Matrix& X, const SymMatrix& Q_z,
                                const DecompositionConfig& config, bool y_discrete,
                                int threads) {
    if (X.rows() != Y.rows()) throw DimensionError("unshared_basis: X/Y row mismatch");
    if (Q_z.dim() != X.cols()) throw DimensionError("unshared_basis: Q_z dimension mismatch");
    const OrthonormalBasis G = range_basis(Q_z);
    const Index D = G.rank();
    if (D == 0) return OrthonormalBasis::empty(X.cols());

    const Matrix Xr = X * G.cols();
    const Matrix Yl = y_labels_matrix(Y, y_discrete);
    const ResponsePartition part = fit_y_partition(Y, config, y_discrete, X.cols());

    const auto builder = [&](const std::vector<Index>& idx) {
        const Matrix Xb = take_rows(Xr, idx);
        const Matrix Yb = take_rows(Yl, idx);
        return build_candidate(config.method, Xb, part.assign(Yb), config.ridge).M;
    };
    const std::uint64_t seed = mix64(config.seed) ^ 0x756e736861726564ULL;
    // the ladle can only discriminate ranks below the space dimension; the
    // boundary case "all of span(Q_z) is informative" is settled by a
    // permutation floor on the last eigenvalue
    int d_hat = 0;
    if (D == 1) {
        d_hat = 0; // promotion below decides whether the single direction stays
    } else {
        const int kmax = static_cast<int>(std::min<Index>(config.kmax_for(X.cols()), D - 1));
        d_hat = ladle_rank(builder, X.rows(), config.bootstrap_B, kmax, seed, threads);
    }
    if (d_hat == D - 1) {
        const Index n = X.rows();
        std::vector<Index> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), Index{0});
        const double lam_last = sym_eig(builder(all)).values(D - 1);
        std::vector<double> floor(static_cast<std::size_t>(config.bootstrap_B));
        parallel_for(config.bootstrap_B, [&](int b) {
            Rng rng = Rng::stream(seed ^ 0x7065726dULL, static_cast<std::uint64_t>(b));
            std::vector<Index> perm = all;
            for (Index i = n - 1; i > 0; --i) {
                const Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
                std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
            }
            // permute the response against the covariates
            const Matrix Yp = take_rows(Yl, perm);
            const CandidateEstimate cand =
                build_candidate(config.method, Xr, part.assign(Yp), config.ridge);
            floor[static_cast<std::size_t>(b)] = cand.eigen.values(D - 1);
        }, threads);
        std::sort(floor.begin(), floor.end());
        const std::size_t q95 = static_cast<std::size_t>(0.95 * (floor.size() - 1));
        if (lam_last > floor[q95]) d_hat = static_cast<int>(D);
    }
    if (d_hat == 0) return OrthonormalBasis::empty(X.cols());

    const CandidateEstimate cand = build_candidate(config.method, Xr, part.assign(Yl), config.ridge);
    const Matrix top = cand.eigen.vectors.cols().leftCols(d_hat);
    return orthonormalize_ordered(G.cols() * top);
}

Matrix FairProjectionFamily::projection(int m) const {
    if (m < 0 || m > s_hat) throw DimensionError("projection: m out of [0, s]");
    Matrix P = Matrix::Zero(dim(), dim());
    if (unshared.rank() > 0) P += unshared.cols() * unshared.cols().transpose();
    if (m > 0) {
        const Matrix Phi_m = shared.cols().leftCols(m);
        P += Phi_m * Phi_m.transpose();
    }
    return P;
}

FairProjectionFamily estimate_family(const Matrix& X, const Matrix& Y, const std::vector<int>& Z,
                                     const DecompositionConfig& config, bool y_discrete,
                                     int threads) {
    const Index n = X.rows();
    const Index p = X.cols();
    if (Y.rows() != n || static_cast<Index>(Z.size()) != n) {
        throw DimensionError("estimate_family: X/Y/Z row mismatch");
    }
    FairProjectionFamily family;
    if (n < 10 * p) family.warnings.push_back("sample size below 10*p");

    Matrix z_col(n, 1);
    for (Index i = 0; i < n; ++i) z_col(i, 0) = static_cast<double>(Z[static_cast<std::size_t>(i)]);
    const ResponsePartition z_part = ResponsePartition::fit(z_col, 0, SliceStrategy::Category);
    const ResponsePartition y_part = fit_y_partition(Y, config, y_discrete, p);
    const Matrix Yl = y_labels_matrix(Y, y_discrete);

    const auto triple = [&](const std::vector<Index>& idx) {
        const Matrix Xb = take_rows(X, idx);
        const Matrix Yb = take_rows(Yl, idx);
        const Matrix Zb = take_rows(z_col, idx);
        const CandidateEstimate my = build_candidate(config.method, Xb, y_part.assign(Yb), config.ridge);
        const CandidateEstimate mz = build_candidate(config.method, Xb, z_part.assign(Zb), config.ridge);
        return cross_candidate(my.M, covariance(Xb), mz.M);
    };
    const auto z_only = [&](const std::vector<Index>& idx) {
        const Matrix Xb = take_rows(X, idx);
        const Matrix Zb = take_rows(z_col, idx);
        return build_candidate(config.method, Xb, z_part.assign(Zb), config.ridge).M;
    };

    const CandidateEstimate cand_y = build_candidate(config.method, X, y_part.assign(Yl), config.ridge);
    const CandidateEstimate cand_z = build_candidate(config.method, X, z_part.assign(z_col), config.ridge);
    for (const auto& w : cand_y.warnings) family.warnings.push_back("M_Y: " + w);
    for (const auto& w : cand_z.warnings) family.warnings.push_back("M_Z: " + w);
    const SymMatrix Sigma = covariance(X);

    const int kmax = config.kmax_for(p);
    int s_hat = ladle_rank(triple, n, config.bootstrap_B, kmax, mix64(config.seed) ^ 0x0cf05cf05cf05cf0ULL, threads);
    const int r_hat = ladle_rank(z_only, n, config.bootstrap_B, kmax, mix64(config.seed) ^ 0x0e5a0e5a0e5a0e5aULL, threads);

    const SymMatrix cross = cross_candidate(cand_y.M, Sigma, cand_z.M);
    const EigenPairs cross_eig = gen_eig(cross, Sigma, config.ridge);
    {
        const double scale = std::max(1.0, cross_eig.values.cwiseAbs().maxCoeff());
        int positive = 0;
        for (Index i = 0; i < cross_eig.values.size(); ++i) {
            if (cross_eig.values(i) > 1e-10 * scale) ++positive;
        }
        if (s_hat > positive) {
            family.warnings.push_back("shared rank reduced to the positive eigenvalue count");
            s_hat = positive;
        }
    }
    OrthonormalBasis shared = s_hat > 0
        ? orthonormalize_ordered(cross_eig.vectors.cols().leftCols(s_hat))
        : OrthonormalBasis::empty(p);

    const OrthonormalBasis psi(cand_z.eigen.vectors.cols().leftCols(r_hat));
    const SymMatrix Q_z = residual_projection(psi);
    family.unshared = unshared_basis(Y, X, Q_z, config, y_discrete, threads);
    family.r_hat = r_hat;
    family.d_hat = static_cast<int>(family.unshared.rank());

    // enforce exact orthogonality so every P^(m) is an orthogonal projector
    if (shared.rank() > 0 && family.unshared.rank() > 0) {
        const Matrix& B = family.unshared.cols();
        const Matrix adjusted = shared.cols() - B * (B.transpose() * shared.cols());
        shared = orthonormalize_ordered(adjusted);
        if (shared.rank() < s_hat) {
            family.warnings.push_back("shared direction absorbed by the unshared block");
        }
    }
    family.shared = shared;
    family.s_hat = static_cast<int>(family.shared.rank());
    family.shared_eigenvalues = cross_eig.values.head(family.s_hat);
    return family;
}

} // namespace sfp
