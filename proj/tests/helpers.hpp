#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "sfp/linalg.hpp"
#include "sfp/rng.hpp"

namespace sfp::test {

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    }
    return m;
}

inline SymMatrix random_symmetric(Index p, std::uint64_t seed) {
    return SymMatrix(random_matrix(p, p, seed));
}

inline SymMatrix random_spd(Index p, std::uint64_t seed) {
    const Matrix g = random_matrix(p, p + 2, seed);
    return SymMatrix(g * g.transpose() / static_cast<double>(p));
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    const auto ranks = [n](const std::vector<double>& v) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        for (std::size_t k = 0; k < n; ++k) r[order[k]] = static_cast<double>(k);
        return r;
    };
    const std::vector<double> rx = ranks(x);
    const std::vector<double> ry = ranks(y);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

/// O(n²) double-loop V-statistic oracle for squared distance covariance.
inline double dcov2_naive(const Matrix& f, const std::vector<int>& z) {
    const Index n = f.rows();
    Matrix a(n, n), b(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            a(i, j) = (f.row(i) - f.row(j)).norm();
            b(i, j) = std::abs(z[static_cast<std::size_t>(i)] - z[static_cast<std::size_t>(j)]);
        }
    }
    const double S1 = a.cwiseProduct(b).mean();
    const double S2 = a.mean() * b.mean();
    double S3 = 0;
    for (Index i = 0; i < n; ++i) S3 += a.row(i).mean() * b.row(i).mean();
    S3 /= static_cast<double>(n);
    return S1 + S2 - 2 * S3;
}

// Exact 1-D optimal transport cost between empirical measures by greedy mass
// matching on sorted samples (the LP solution in one dimension).
inline double wasserstein1_lp(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double wa = 1.0 / static_cast<double>(a.size());
    const double wb = 1.0 / static_cast<double>(b.size());
    double ra = wa, rb = wb, cost = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double move = std::min(ra, rb);
        cost += move * std::abs(a[i] - b[j]);
        ra -= move;
        rb -= move;
        if (ra <= 1e-15) {
            ++i;
            ra = wa;
        }
        if (rb <= 1e-15) {
            ++j;
            rb = wb;
        }
    }
    return cost;
}

/// Moore-Penrose least squares oracle: min-norm solution via SVD.
inline Matrix pinv_solve(const Matrix& A, const Matrix& B) {
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double tol = 1e-10 * svd.singularValues()(0) *
                       static_cast<double>(std::max(A.rows(), A.cols()));
    Vector inv = svd.singularValues();
    for (Index i = 0; i < inv.size(); ++i) inv(i) = inv(i) > tol ? 1.0 / inv(i) : 0.0;
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * B;
}

} // namespace sfp::test
