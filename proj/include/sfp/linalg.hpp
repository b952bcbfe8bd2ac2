#pragma once

#include <Eigen/Dense>

#include "sfp/error.hpp"

namespace sfp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kDefaultRidge = 1e-8;

/// Square symmetric real matrix: symmetrized on construction, entries finite.
class SymMatrix {
public:
    explicit SymMatrix(const Matrix& m);

    static SymMatrix zero(Index p) { return SymMatrix(Matrix::Zero(p, p)); }
    static SymMatrix identity(Index p) { return SymMatrix(Matrix::Identity(p, p)); }

    Index dim() const { return m_.rows(); }
    const Matrix& mat() const { return m_; }

private:
    Matrix m_;
};

// Matrix of basis columns with a deterministic sign convention: the first
// component of each column with |value| > 1e-12 is made positive. Columns are
// Euclidean-orthonormal in the ordinary case; generalized eigensolves store
// Sigma-orthonormal columns here under the same sign rule.
class OrthonormalBasis {
public:
    OrthonormalBasis() = default;
    explicit OrthonormalBasis(Matrix cols);

    static OrthonormalBasis empty(Index dim) { return OrthonormalBasis(Matrix::Zero(dim, 0)); }
    /// Throws InputError unless colsᵀcols = I within tol.
    static OrthonormalBasis checked(Matrix cols, double tol = 1e-8);

    Index dim() const { return cols_.rows(); }
    Index rank() const { return cols_.cols(); }
    const Matrix& cols() const { return cols_; }
    bool is_orthonormal(double tol = 1e-8) const;

private:
    Matrix cols_;
};

struct EigenPairs {
    Vector values;            // sorted non-increasing
    OrthonormalBasis vectors; // same column order as values
};

/// Full symmetric eigendecomposition, descending eigenvalues, fixed signs.
EigenPairs sym_eig(const SymMatrix& M);

// Solves M v = lambda Sigma v by whitening with
// (Sigma + ridge * (tr Sigma / p) I)^{-1/2}; vectors are returned in original
// coordinates and are Sigma-orthonormal.
EigenPairs gen_eig(const SymMatrix& M, const SymMatrix& Sigma, double ridge = kDefaultRidge);

/// B Bᵀ.
SymMatrix projection(const OrthonormalBasis& B);

/// ||B1B1ᵀ − B2B2ᵀ||_F / sqrt(2); 0 iff equal spans.
double subspace_distance(const OrthonormalBasis& B1, const OrthonormalBasis& B2);

/// Basis of span(V) via column-pivoted QR; columns with residual < 1e-10 dropped.
OrthonormalBasis orthonormalize(const Matrix& V);

// Order-preserving modified Gram-Schmidt (two passes); dependent columns are
// dropped. Used where the column order is meaningful.
OrthonormalBasis orthonormalize_ordered(const Matrix& V);

/// (Sigma + ridge * (tr Sigma / p) I)^{-1/2}.
SymMatrix inv_sqrt(const SymMatrix& Sigma, double ridge = kDefaultRidge);

/// max_i ||M v_i − lambda_i Sigma v_i||, Sigma = I when not given.
double eigen_residual(const SymMatrix& M, const EigenPairs& ep);
double eigen_residual(const SymMatrix& M, const SymMatrix& Sigma, const EigenPairs& ep);

} // namespace sfp
