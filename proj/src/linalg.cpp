#include "sfp/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace sfp {

namespace {

void fix_signs(Matrix& cols) {
    for (Index j = 0; j < cols.cols(); ++j) {
        for (Index i = 0; i < cols.rows(); ++i) {
            const double v = cols(i, j);
            if (std::abs(v) > 1e-12) {
                if (v < 0) cols.col(j) = -cols.col(j);
                break;
            }
        }
    }
}

} // namespace

SymMatrix::SymMatrix(const Matrix& m) {
    if (m.rows() != m.cols()) throw DimensionError("SymMatrix: matrix is not square");
    if (!m.allFinite()) throw InputError("SymMatrix: non-finite entries");
    m_ = 0.5 * (m + m.transpose());
}

OrthonormalBasis::OrthonormalBasis(Matrix cols) : cols_(std::move(cols)) {
    if (!cols_.allFinite()) throw InputError("OrthonormalBasis: non-finite entries");
    fix_signs(cols_);
}

OrthonormalBasis OrthonormalBasis::checked(Matrix cols, double tol) {
    OrthonormalBasis b(std::move(cols));
    if (!b.is_orthonormal(tol)) throw InputError("OrthonormalBasis: columns not orthonormal");
    return b;
}

bool OrthonormalBasis::is_orthonormal(double tol) const {
    if (cols_.cols() == 0) return true;
    const Matrix gram = cols_.transpose() * cols_;
    return (gram - Matrix::Identity(cols_.cols(), cols_.cols())).cwiseAbs().maxCoeff() <= tol;
}

EigenPairs sym_eig(const SymMatrix& M) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(M.mat());
    if (solver.info() != Eigen::Success) throw InputError("sym_eig: eigensolver failed");
    const Index p = M.dim();
    Vector values(p);
    Matrix vectors(p, p);
    for (Index i = 0; i < p; ++i) {
        values(i) = solver.eigenvalues()(p - 1 - i);
        vectors.col(i) = solver.eigenvectors().col(p - 1 - i);
    }
    return EigenPairs{std::move(values), OrthonormalBasis(std::move(vectors))};
}

EigenPairs gen_eig(const SymMatrix& M, const SymMatrix& Sigma, double ridge) {
    if (M.dim() != Sigma.dim()) throw DimensionError("gen_eig: dimension mismatch");
    const SymMatrix W = inv_sqrt(Sigma, ridge);
    const SymMatrix whitened(W.mat() * M.mat() * W.mat());
    EigenPairs ep = sym_eig(whitened);
    return EigenPairs{ep.values, OrthonormalBasis(W.mat() * ep.vectors.cols())};
}

SymMatrix projection(const OrthonormalBasis& B) {
    if (B.rank() == 0) return SymMatrix::zero(B.dim());
    return SymMatrix(B.cols() * B.cols().transpose());
}

double subspace_distance(const OrthonormalBasis& B1, const OrthonormalBasis& B2) {
    if (B1.dim() != B2.dim()) throw DimensionError("subspace_distance: ambient dimension mismatch");
    // entrywise difference of the projectors: stable for near-identical spans
    Matrix diff = Matrix::Zero(B1.dim(), B1.dim());
    if (B1.rank() > 0) diff += B1.cols() * B1.cols().transpose();
    if (B2.rank() > 0) diff -= B2.cols() * B2.cols().transpose();
    return diff.norm() / std::sqrt(2.0);
}

OrthonormalBasis orthonormalize(const Matrix& V) {
    if (!V.allFinite()) throw InputError("orthonormalize: non-finite entries");
    if (V.cols() == 0) return OrthonormalBasis::empty(V.rows());
    Eigen::ColPivHouseholderQR<Matrix> qr(V);
    const Matrix& R = qr.matrixR();
    Index rank = 0;
    const Index kmax = std::min(V.rows(), V.cols());
    for (Index j = 0; j < kmax; ++j) {
        if (std::abs(R(j, j)) >= 1e-10) ++rank;
    }
    if (rank == 0) return OrthonormalBasis::empty(V.rows());
    Matrix Q = qr.householderQ() * Matrix::Identity(V.rows(), rank);
    return OrthonormalBasis(std::move(Q));
}

OrthonormalBasis orthonormalize_ordered(const Matrix& V) {
    if (!V.allFinite()) throw InputError("orthonormalize_ordered: non-finite entries");
    Matrix out(V.rows(), V.cols());
    Index kept = 0;
    for (Index j = 0; j < V.cols(); ++j) {
        Vector v = V.col(j);
        for (int pass = 0; pass < 2; ++pass) {
            for (Index k = 0; k < kept; ++k) {
                v -= out.col(k) * out.col(k).dot(v);
            }
        }
        const double norm = v.norm();
        if (norm >= 1e-10) {
            out.col(kept++) = v / norm;
        }
    }
    return OrthonormalBasis(out.leftCols(kept));
}

SymMatrix inv_sqrt(const SymMatrix& Sigma, double ridge) {
    if (ridge < 0) throw InputError("inv_sqrt: negative ridge");
    const Index p = Sigma.dim();
    EigenPairs ep = sym_eig(Sigma);
    const double spectral = ep.values.cwiseAbs().maxCoeff();
    if (ep.values.minCoeff() < -1e-8 * spectral) {
        throw InputError("inv_sqrt: matrix is not positive semi-definite");
    }
    const double shift = ridge * Sigma.mat().trace() / static_cast<double>(p);
    Vector scale(p);
    for (Index i = 0; i < p; ++i) {
        const double lam = std::max(ep.values(i), 0.0) + shift;
        if (lam <= 1e-14 * std::max(1.0, spectral)) {
            throw ConditioningError("inv_sqrt: numerically singular matrix with ridge 0");
        }
        scale(i) = 1.0 / std::sqrt(lam);
    }
    const Matrix& Q = ep.vectors.cols();
    return SymMatrix(Q * scale.asDiagonal() * Q.transpose());
}

double eigen_residual(const SymMatrix& M, const EigenPairs& ep) {
    return eigen_residual(M, SymMatrix::identity(M.dim()), ep);
}

double eigen_residual(const SymMatrix& M, const SymMatrix& Sigma, const EigenPairs& ep) {
    double worst = 0.0;
    for (Index i = 0; i < ep.values.size(); ++i) {
        const Vector v = ep.vectors.cols().col(i);
        worst = std::max(worst, (M.mat() * v - ep.values(i) * (Sigma.mat() * v)).norm());
    }
    return worst;
}

} // namespace sfp
