#include "sfp/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sfp/rng.hpp"

namespace sfp {

namespace {

void check_groups(const std::vector<int>& z) {
    bool has0 = false, has1 = false;
    for (int v : z) {
        if (v == 0) has0 = true;
        else if (v == 1) has1 = true;
        else throw InputError("group indicator must be binary");
    }
    if (!has0 || !has1) throw MetricError("both groups must be non-empty");
}

// deterministically subsample rows when n exceeds the cap
std::vector<Index> capped_rows(Index n, Index n_cap, std::uint64_t seed) {
    std::vector<Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
    if (n <= n_cap) return rows;
    Rng rng = Rng::stream(seed, 0xdc0f2ULL);
    for (Index i = 0; i < n_cap; ++i) {
        const Index j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]);
    }
    rows.resize(static_cast<std::size_t>(n_cap));
    std::sort(rows.begin(), rows.end());
    return rows;
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double best = 0.0;
    while (i < a.size() || j < b.size()) {
        double v;
        if (j >= b.size() || (i < a.size() && a[i] <= b[j])) v = a[i];
        else v = b[j];
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return best;
}

} // namespace

double dp_gap(const GroupedPredictions& gp) {
    check_groups(gp.z);
    const Index n = gp.probs.rows();
    const Index K = gp.probs.cols();
    if (K < 2) throw InputError("dp_gap: need at least two classes");
    Eigen::RowVectorXd mean0 = Eigen::RowVectorXd::Zero(K);
    Eigen::RowVectorXd mean1 = Eigen::RowVectorXd::Zero(K);
    Index n0 = 0, n1 = 0;
    for (Index i = 0; i < n; ++i) {
        if (gp.z[static_cast<std::size_t>(i)] == 0) {
            mean0 += gp.probs.row(i);
            ++n0;
        } else {
            mean1 += gp.probs.row(i);
            ++n1;
        }
    }
    mean0 /= static_cast<double>(n0);
    mean1 /= static_cast<double>(n1);
    double acc = 0.0;
    for (Index j = 0; j < K - 1; ++j) {
        const double gap = mean1(j) - mean0(j);
        acc += gap * gap;
    }
    return std::sqrt(acc / static_cast<double>(K - 1)) * 100.0;
}

TprGap tpr_gap(const GroupedPredictions& gp) {
    check_groups(gp.z);
    if (gp.labels.size() != static_cast<std::size_t>(gp.probs.rows())) {
        throw MetricError("tpr_gap: labels required");
    }
    const Index n = gp.probs.rows();
    const Index K = gp.probs.cols();
    std::vector<Index> pos0(static_cast<std::size_t>(K), 0), pos1(static_cast<std::size_t>(K), 0);
    std::vector<Index> hit0(static_cast<std::size_t>(K), 0), hit1(static_cast<std::size_t>(K), 0);
    for (Index i = 0; i < n; ++i) {
        const int y = gp.labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= K) throw InputError("tpr_gap: label out of range");
        Index pred = 0;
        gp.probs.row(i).maxCoeff(&pred);
        const bool hit = pred == static_cast<Index>(y);
        if (gp.z[static_cast<std::size_t>(i)] == 0) {
            pos0[static_cast<std::size_t>(y)]++;
            hit0[static_cast<std::size_t>(y)] += hit;
        } else {
            pos1[static_cast<std::size_t>(y)]++;
            hit1[static_cast<std::size_t>(y)] += hit;
        }
    }
    TprGap out;
    double acc = 0.0;
    int used = 0;
    for (Index j = 0; j < K; ++j) {
        if (pos0[static_cast<std::size_t>(j)] == 0 || pos1[static_cast<std::size_t>(j)] == 0) {
            out.skipped_classes++;
            continue;
        }
        const double t0 = static_cast<double>(hit0[static_cast<std::size_t>(j)]) / static_cast<double>(pos0[static_cast<std::size_t>(j)]);
        const double t1 = static_cast<double>(hit1[static_cast<std::size_t>(j)]) / static_cast<double>(pos1[static_cast<std::size_t>(j)]);
        acc += (t1 - t0) * (t1 - t0);
        ++used;
    }
    if (used == 0) throw MetricError("tpr_gap: no class has positives in both groups");
    out.value = std::sqrt(acc / static_cast<double>(used)) * 100.0;
    return out;
}

double mcdp(const GroupedPredictions& gp) {
    check_groups(gp.z);
    const Index n = gp.probs.rows();
    const Index K = gp.probs.cols();
    if (K < 2) throw InputError("mcdp: need at least two classes");
    double acc = 0.0;
    for (Index j = 0; j < K - 1; ++j) {
        std::vector<double> g0, g1;
        for (Index i = 0; i < n; ++i) {
            (gp.z[static_cast<std::size_t>(i)] == 0 ? g0 : g1).push_back(gp.probs(i, j));
        }
        const double ks = ks_distance(std::move(g0), std::move(g1));
        acc += ks * ks;
    }
    return std::sqrt(acc / static_cast<double>(K - 1)) * 100.0;
}

double dcov2(const Matrix& f, const std::vector<int>& z, Index n_cap, std::uint64_t seed) {
    const Index n_all = f.rows();
    if (static_cast<Index>(z.size()) != n_all) throw DimensionError("dcov2: row mismatch");
    if (n_all < 2) throw InputError("dcov2: need at least two samples");
    const std::vector<Index> rows = capped_rows(n_all, n_cap, seed);
    const Index n = static_cast<Index>(rows.size());

    Vector a_rowsum = Vector::Zero(n);
    Vector b_rowsum = Vector::Zero(n);
    double ab_sum = 0.0, a_sum = 0.0, b_sum = 0.0;
    for (Index i = 0; i < n; ++i) {
        const auto zi = z[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
        for (Index j = i + 1; j < n; ++j) {
            const double a = (f.row(rows[static_cast<std::size_t>(i)]) - f.row(rows[static_cast<std::size_t>(j)])).norm();
            const double b = zi != z[static_cast<std::size_t>(rows[static_cast<std::size_t>(j)])] ? 1.0 : 0.0;
            a_rowsum(i) += a;
            a_rowsum(j) += a;
            b_rowsum(i) += b;
            b_rowsum(j) += b;
            ab_sum += 2.0 * a * b;
            a_sum += 2.0 * a;
            b_sum += 2.0 * b;
        }
    }
    const double nn = static_cast<double>(n) * static_cast<double>(n);
    const double S1 = ab_sum / nn;
    const double S2 = (a_sum / nn) * (b_sum / nn);
    const double S3 = a_rowsum.dot(b_rowsum) / (nn * static_cast<double>(n));
    return S1 + S2 - 2.0 * S3;
}

double dcov2_binary_form(const Matrix& f, const std::vector<int>& z, Index n_cap,
                         std::uint64_t seed) {
    const Index n_all = f.rows();
    if (static_cast<Index>(z.size()) != n_all) throw DimensionError("dcov2: row mismatch");
    const std::vector<Index> rows = capped_rows(n_all, n_cap, seed);
    const Index n = static_cast<Index>(rows.size());
    double n1 = 0;
    for (Index i = 0; i < n; ++i) n1 += z[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
    const double n0 = static_cast<double>(n) - n1;
    if (n0 == 0 || n1 == 0) throw MetricError("dcov2_binary_form: both groups must be non-empty");

    double cross = 0.0, within0 = 0.0, within1 = 0.0;
    for (Index i = 0; i < n; ++i) {
        const int zi = z[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
        for (Index j = i + 1; j < n; ++j) {
            const double a = (f.row(rows[static_cast<std::size_t>(i)]) - f.row(rows[static_cast<std::size_t>(j)])).norm();
            const int zj = z[static_cast<std::size_t>(rows[static_cast<std::size_t>(j)])];
            if (zi != zj) cross += 2.0 * a;
            else if (zi == 0) within0 += 2.0 * a;
            else within1 += 2.0 * a;
        }
    }
    const double c01 = cross / (2.0 * n0 * n1); // mean over ordered cross pairs
    const double c00 = within0 / (n0 * n0);     // V-statistic, diagonal zeros included
    const double c11 = within1 / (n1 * n1);
    const double p = n1 / static_cast<double>(n);
    const double q = n0 / static_cast<double>(n);
    return 2.0 * p * p * q * q * (2.0 * c01 - c00 - c11);
}

double wasserstein1(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw InputError("wasserstein1: empty sample");
    std::vector<double> sa = a, sb = b;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    const double na = static_cast<double>(sa.size());
    const double nb = static_cast<double>(sb.size());
    std::size_t i = 0, j = 0;
    double t = 0.0, total = 0.0;
    while (i < sa.size() && j < sb.size()) {
        const double ta = static_cast<double>(i + 1) / na;
        const double tb = static_cast<double>(j + 1) / nb;
        const double next = std::min(ta, tb);
        total += (next - t) * std::abs(sa[i] - sb[j]);
        t = next;
        if (ta <= next + 1e-18) ++i;
        if (tb <= next + 1e-18) ++j;
    }
    return total;
}

double wasserstein1(const Vector& a, const Vector& b) {
    return wasserstein1(std::vector<double>(a.data(), a.data() + a.size()),
                        std::vector<double>(b.data(), b.data() + b.size()));
}

Vector lda_direction(const Matrix& X, const std::vector<int>& z, double ridge) {
    const Index n = X.rows();
    if (static_cast<Index>(z.size()) != n) throw DimensionError("lda_direction: row mismatch");
    check_groups(z);
    const Index p = X.cols();
    Vector mu0 = Vector::Zero(p), mu1 = Vector::Zero(p);
    Index n0 = 0, n1 = 0;
    for (Index i = 0; i < n; ++i) {
        if (z[static_cast<std::size_t>(i)] == 0) {
            mu0 += X.row(i).transpose();
            ++n0;
        } else {
            mu1 += X.row(i).transpose();
            ++n1;
        }
    }
    if (n0 < 2 || n1 < 2) throw InputError("lda_direction: each group needs >= 2 samples");
    mu0 /= static_cast<double>(n0);
    mu1 /= static_cast<double>(n1);
    Matrix Sw = Matrix::Zero(p, p);
    for (Index i = 0; i < n; ++i) {
        const Vector d = X.row(i).transpose() - (z[static_cast<std::size_t>(i)] == 0 ? mu0 : mu1);
        Sw.noalias() += d * d.transpose();
    }
    Sw /= static_cast<double>(n - 2);
    Sw.diagonal().array() += ridge * std::max(Sw.trace() / static_cast<double>(p), 1e-300);
    Vector w = Sw.ldlt().solve(mu1 - mu0);
    const double norm = w.norm();
    if (norm == 0) throw InputError("lda_direction: identical group means");
    w /= norm;
    if (w.dot(mu1 - mu0) < 0) w = -w;
    return w;
}

} // namespace sfp
