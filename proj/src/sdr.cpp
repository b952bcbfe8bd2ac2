#include "sfp/sdr.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "sfp/rng.hpp"

namespace sfp {

std::string to_string(SliceStrategy s) {
    switch (s) {
        case SliceStrategy::Quantile: return "quantile";
        case SliceStrategy::Category: return "category";
        case SliceStrategy::KMeans: return "kmeans";
    }
    return "?";
}

std::string to_string(SdrMethod m) {
    return m == SdrMethod::SIR ? "sir" : "save";
}

namespace {

std::vector<int> recount(const std::vector<int>& labels, int H) {
    std::vector<int> counts(static_cast<std::size_t>(H), 0);
    for (int l : labels) counts[static_cast<std::size_t>(l)]++;
    return counts;
}

// Drops empty slices and renumbers labels so ids stay contiguous.
SliceAssignment compact(std::vector<int> labels, int H, SliceStrategy strategy) {
    std::vector<int> counts = recount(labels, H);
    std::vector<int> remap(static_cast<std::size_t>(H), -1);
    int next = 0;
    for (int h = 0; h < H; ++h) {
        if (counts[static_cast<std::size_t>(h)] > 0) remap[static_cast<std::size_t>(h)] = next++;
    }
    for (int& l : labels) l = remap[static_cast<std::size_t>(l)];
    SliceAssignment out;
    out.labels = std::move(labels);
    out.counts = recount(out.labels, next);
    out.strategy = strategy;
    return out;
}

std::vector<int> quantile_labels(const Vector& y, int H) {
    const Index n = y.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return y(a) < y(b); });
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    for (int h = 0; h < H; ++h) {
        const Index lo = n * h / H;
        const Index hi = n * (h + 1) / H;
        for (Index k = lo; k < hi; ++k) labels[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = h;
    }
    return labels;
}

Matrix kmeans_centers(const Matrix& R, int H, std::uint64_t seed) {
    const Index n = R.rows();
    Rng rng = Rng::stream(seed, 0x6b6d65616e73ULL);
    Matrix centers(H, R.cols());
    Vector best = Vector::Constant(n, std::numeric_limits<double>::infinity());

    // k-means++ seeding
    centers.row(0) = R.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
    for (int h = 1; h < H; ++h) {
        double total = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double d2 = (R.row(i) - centers.row(h - 1)).squaredNorm();
            if (d2 < best(i)) best(i) = d2;
            total += best(i);
        }
        Index pick = n - 1;
        if (total > 0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (Index i = 0; i < n; ++i) {
                acc += best(i);
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        centers.row(h) = R.row(pick);
    }

    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    Vector dist2(n);
    for (int iter = 0; iter < 50; ++iter) {
        for (Index i = 0; i < n; ++i) {
            int arg = 0;
            double bestd = (R.row(i) - centers.row(0)).squaredNorm();
            for (int h = 1; h < H; ++h) {
                const double d2 = (R.row(i) - centers.row(h)).squaredNorm();
                if (d2 < bestd) {
                    bestd = d2;
                    arg = h;
                }
            }
            labels[static_cast<std::size_t>(i)] = arg;
            dist2(i) = bestd;
        }
        for (int h = 0; h < H; ++h) {
            Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(R.cols());
            Index count = 0;
            for (Index i = 0; i < n; ++i) {
                if (labels[static_cast<std::size_t>(i)] == h) {
                    sum += R.row(i);
                    ++count;
                }
            }
            if (count > 0) {
                centers.row(h) = sum / static_cast<double>(count);
            } else {
                // reseed an empty cluster at the worst-covered point
                Index far = 0;
                dist2.maxCoeff(&far);
                centers.row(h) = R.row(far);
                labels[static_cast<std::size_t>(far)] = h;
                dist2(far) = 0.0;
            }
        }
    }
    return centers;
}

std::vector<int> nearest_center_labels(const Matrix& R, const Matrix& centers) {
    std::vector<int> labels(static_cast<std::size_t>(R.rows()), 0);
    for (Index i = 0; i < R.rows(); ++i) {
        int arg = 0;
        double bestd = (R.row(i) - centers.row(0)).squaredNorm();
        for (Index h = 1; h < centers.rows(); ++h) {
            const double d2 = (R.row(i) - centers.row(h)).squaredNorm();
            if (d2 < bestd) {
                bestd = d2;
                arg = static_cast<int>(h);
            }
        }
        labels[static_cast<std::size_t>(i)] = arg;
    }
    return labels;
}

struct Standardized {
    Matrix Xt;     // centered and whitened covariates
    SymMatrix W;   // inverse square root used for the back-transform
};

Standardized standardize(const Matrix& X, double ridge) {
    const SymMatrix S = covariance(X);
    SymMatrix W = inv_sqrt(S, ridge);
    const Eigen::RowVectorXd mean = X.colwise().mean();
    Matrix Xt = (X.rowwise() - mean) * W.mat();
    return Standardized{std::move(Xt), std::move(W)};
}

void check_slices(const SliceAssignment& slices, Index n) {
    if (slices.labels.size() != static_cast<std::size_t>(n)) {
        throw InputError("candidate: slice assignment does not cover the sample");
    }
    if (slices.counts.empty()) throw InputError("candidate: no slices");
}

} // namespace

ResponsePartition ResponsePartition::fit(const Matrix& R, int H, SliceStrategy strategy,
                                         std::uint64_t seed) {
    ResponsePartition part;
    part.strategy_ = strategy;
    switch (strategy) {
        case SliceStrategy::Quantile: {
            if (R.cols() != 1) throw InputError("quantile slicing expects a univariate response");
            if (H < 2) throw InputError("quantile slicing needs H >= 2");
            if (H > R.rows()) throw InputError("more slices than samples");
            std::vector<double> sorted(static_cast<std::size_t>(R.rows()));
            for (Index i = 0; i < R.rows(); ++i) sorted[static_cast<std::size_t>(i)] = R(i, 0);
            std::sort(sorted.begin(), sorted.end());
            const Index n = R.rows();
            for (int h = 1; h < H; ++h) {
                part.edges_.push_back(sorted[static_cast<std::size_t>(n * h / H - 1)]);
            }
            break;
        }
        case SliceStrategy::Category: {
            if (R.cols() != 1) throw InputError("category slicing expects a single label column");
            part.categories_.assign(R.data(), R.data() + R.rows());
            std::sort(part.categories_.begin(), part.categories_.end());
            part.categories_.erase(std::unique(part.categories_.begin(), part.categories_.end()),
                                   part.categories_.end());
            break;
        }
        case SliceStrategy::KMeans: {
            if (H < 2) throw InputError("k-means slicing needs H >= 2");
            if (H > R.rows()) throw InputError("more slices than samples");
            part.centers_ = kmeans_centers(R, H, seed);
            break;
        }
    }
    return part;
}

int ResponsePartition::slice_count() const {
    switch (strategy_) {
        case SliceStrategy::Quantile: return static_cast<int>(edges_.size()) + 1;
        case SliceStrategy::Category: return static_cast<int>(categories_.size());
        case SliceStrategy::KMeans: return static_cast<int>(centers_.rows());
    }
    return 0;
}

SliceAssignment ResponsePartition::assign(const Matrix& R) const {
    const Index n = R.rows();
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    switch (strategy_) {
        case SliceStrategy::Quantile: {
            for (Index i = 0; i < n; ++i) {
                const double v = R(i, 0);
                const auto it = std::lower_bound(edges_.begin(), edges_.end(), v);
                labels[static_cast<std::size_t>(i)] = static_cast<int>(it - edges_.begin());
            }
            return compact(std::move(labels), static_cast<int>(edges_.size()) + 1, strategy_);
        }
        case SliceStrategy::Category: {
            for (Index i = 0; i < n; ++i) {
                const double v = R(i, 0);
                const auto it = std::lower_bound(categories_.begin(), categories_.end(), v);
                if (it == categories_.end() || *it != v) {
                    throw InputError("category slicing: unseen level");
                }
                labels[static_cast<std::size_t>(i)] = static_cast<int>(it - categories_.begin());
            }
            return compact(std::move(labels), static_cast<int>(categories_.size()), strategy_);
        }
        case SliceStrategy::KMeans: {
            labels = nearest_center_labels(R, centers_);
            return compact(std::move(labels), static_cast<int>(centers_.rows()), strategy_);
        }
    }
    throw InputError("unknown slicing strategy");
}

SliceAssignment slice_response(const Matrix& R, int H, SliceStrategy strategy,
                               std::uint64_t seed) {
    if (R.rows() == 0) throw InputError("slice_response: empty response");
    switch (strategy) {
        case SliceStrategy::Quantile: {
            if (R.cols() != 1) throw InputError("quantile slicing expects a univariate response");
            if (H < 2) throw InputError("quantile slicing needs H >= 2");
            if (H > R.rows()) throw InputError("more slices than samples");
            return compact(quantile_labels(R.col(0), H), H, strategy);
        }
        case SliceStrategy::Category:
            return ResponsePartition::fit(R, H, strategy, seed).assign(R);
        case SliceStrategy::KMeans: {
            if (H > R.rows()) throw InputError("more slices than samples");
            return ResponsePartition::fit(R, H, strategy, seed).assign(R);
        }
    }
    throw InputError("unknown slicing strategy");
}

SymMatrix covariance(const Matrix& X) {
    if (X.rows() < 2) throw InputError("covariance: need at least two samples");
    if (!X.allFinite()) throw InputError("covariance: non-finite entries");
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Matrix centered = X.rowwise() - mean;
    return SymMatrix(centered.transpose() * centered / static_cast<double>(X.rows() - 1));
}

CandidateEstimate sir_candidate(const Matrix& X, const SliceAssignment& slices, double ridge) {
    const Index n = X.rows();
    const Index p = X.cols();
    check_slices(slices, n);
    const Standardized std_x = standardize(X, ridge);
    const int H = slices.slice_count();

    Matrix means = Matrix::Zero(H, p);
    for (Index i = 0; i < n; ++i) means.row(slices.labels[static_cast<std::size_t>(i)]) += std_x.Xt.row(i);
    Matrix M_std = Matrix::Zero(p, p);
    for (int h = 0; h < H; ++h) {
        const double nh = slices.counts[static_cast<std::size_t>(h)];
        const Eigen::RowVectorXd m = means.row(h) / nh;
        M_std.noalias() += (nh / static_cast<double>(n)) * (m.transpose() * m);
    }
    SymMatrix M(std_x.W.mat() * M_std * std_x.W.mat());
    EigenPairs eigen = sym_eig(M);
    return CandidateEstimate{std::move(M), std::move(eigen), SdrMethod::SIR, slices, {}};
}

CandidateEstimate save_candidate(const Matrix& X, const SliceAssignment& slices, double ridge) {
    const Index n = X.rows();
    const Index p = X.cols();
    check_slices(slices, n);
    std::vector<std::string> warnings;
    for (std::size_t h = 0; h < slices.counts.size(); ++h) {
        if (slices.counts[h] < 2) throw InputError("save_candidate: slice with fewer than 2 samples");
        if (slices.counts[h] < p + 1) {
            warnings.push_back("slice " + std::to_string(h) + " has fewer than p+1 samples");
        }
    }
    const Standardized std_x = standardize(X, ridge);
    const int H = slices.slice_count();

    Matrix means = Matrix::Zero(H, p);
    for (Index i = 0; i < n; ++i) means.row(slices.labels[static_cast<std::size_t>(i)]) += std_x.Xt.row(i);
    for (int h = 0; h < H; ++h) means.row(h) /= static_cast<double>(slices.counts[static_cast<std::size_t>(h)]);

    std::vector<Matrix> scatter(static_cast<std::size_t>(H), Matrix::Zero(p, p));
    for (Index i = 0; i < n; ++i) {
        const int h = slices.labels[static_cast<std::size_t>(i)];
        const Eigen::RowVectorXd d = std_x.Xt.row(i) - means.row(h);
        scatter[static_cast<std::size_t>(h)].noalias() += d.transpose() * d;
    }
    Matrix M_std = Matrix::Zero(p, p);
    for (int h = 0; h < H; ++h) {
        const double nh = slices.counts[static_cast<std::size_t>(h)];
        const Matrix Vh = scatter[static_cast<std::size_t>(h)] / (nh - 1.0);
        const Matrix A = Matrix::Identity(p, p) - Vh;
        M_std.noalias() += (nh / static_cast<double>(n)) * (A * A);
    }
    SymMatrix M(std_x.W.mat() * M_std * std_x.W.mat());
    EigenPairs eigen = sym_eig(M);
    return CandidateEstimate{std::move(M), std::move(eigen), SdrMethod::SAVE, slices,
                             std::move(warnings)};
}

Vector weighted_mean(const Matrix& X, const Vector& w) {
    if (w.size() != X.rows()) throw DimensionError("weighted_mean: weight length mismatch");
    const double total = w.sum();
    if (total <= 0) throw InputError("weighted_mean: non-positive total weight");
    return X.transpose() * w / total;
}

SymMatrix weighted_covariance(const Matrix& X, const Vector& w) {
    const Vector mu = weighted_mean(X, w);
    const double total = w.sum();
    const Matrix centered = X.rowwise() - mu.transpose();
    return SymMatrix(centered.transpose() * w.asDiagonal() * centered / total);
}

namespace {

struct WeightedStandardized {
    Matrix Xt;
    SymMatrix W;
};

WeightedStandardized standardize_weighted(const Matrix& X, const Vector& w, double ridge) {
    const Vector mu = weighted_mean(X, w);
    SymMatrix W = inv_sqrt(weighted_covariance(X, w), ridge);
    Matrix Xt = (X.rowwise() - mu.transpose()) * W.mat();
    return WeightedStandardized{std::move(Xt), std::move(W)};
}

} // namespace

SymMatrix sir_matrix_weighted(const Matrix& X, const SliceAssignment& slices, const Vector& w,
                              double ridge) {
    const Index n = X.rows();
    const Index p = X.cols();
    check_slices(slices, n);
    if (w.size() != n) throw DimensionError("sir_matrix_weighted: weight length mismatch");
    const double total = w.sum();
    const WeightedStandardized std_x = standardize_weighted(X, w, ridge);
    const int H = slices.slice_count();

    Matrix sums = Matrix::Zero(H, p);
    Vector mass = Vector::Zero(H);
    for (Index i = 0; i < n; ++i) {
        const int h = slices.labels[static_cast<std::size_t>(i)];
        sums.row(h) += w(i) * std_x.Xt.row(i);
        mass(h) += w(i);
    }
    Matrix M_std = Matrix::Zero(p, p);
    for (int h = 0; h < H; ++h) {
        if (mass(h) <= 0) continue;
        const Eigen::RowVectorXd m = sums.row(h) / mass(h);
        M_std.noalias() += (mass(h) / total) * (m.transpose() * m);
    }
    return SymMatrix(std_x.W.mat() * M_std * std_x.W.mat());
}

SymMatrix save_matrix_weighted(const Matrix& X, const SliceAssignment& slices, const Vector& w,
                               double ridge) {
    const Index n = X.rows();
    const Index p = X.cols();
    check_slices(slices, n);
    if (w.size() != n) throw DimensionError("save_matrix_weighted: weight length mismatch");
    const double total = w.sum();
    const WeightedStandardized std_x = standardize_weighted(X, w, ridge);
    const int H = slices.slice_count();

    Matrix sums = Matrix::Zero(H, p);
    Vector mass = Vector::Zero(H);
    for (Index i = 0; i < n; ++i) {
        const int h = slices.labels[static_cast<std::size_t>(i)];
        sums.row(h) += w(i) * std_x.Xt.row(i);
        mass(h) += w(i);
    }
    Matrix M_std = Matrix::Zero(p, p);
    for (int h = 0; h < H; ++h) {
        if (mass(h) <= 0) continue;
        const Eigen::RowVectorXd m = sums.row(h) / mass(h);
        Matrix Vh = Matrix::Zero(p, p);
        for (Index i = 0; i < n; ++i) {
            if (slices.labels[static_cast<std::size_t>(i)] != h) continue;
            const Eigen::RowVectorXd d = std_x.Xt.row(i) - m;
            Vh.noalias() += w(i) * (d.transpose() * d);
        }
        Vh /= mass(h);
        const Matrix A = Matrix::Identity(p, p) - Vh;
        M_std.noalias() += (mass(h) / total) * (A * A);
    }
    return SymMatrix(std_x.W.mat() * M_std * std_x.W.mat());
}

SymMatrix candidate_matrix_weighted(SdrMethod method, const Matrix& X,
                                    const SliceAssignment& slices, const Vector& w,
                                    double ridge) {
    return method == SdrMethod::SIR ? sir_matrix_weighted(X, slices, w, ridge)
                                    : save_matrix_weighted(X, slices, w, ridge);
}

} // namespace sfp
