// Acceptance suite: one criterion per invocation (1..8) or "all". Each
// criterion prints a PASS/FAIL line with the measured values; the process
// exit code is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>

#include "sfp/influence.hpp"
#include "sfp/pipeline.hpp"
#include "sfp/rng.hpp"

using namespace sfp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
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
    const auto rx = ranks(x), ry = ranks(y);
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

std::string fmt(double v, int prec = 3) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

// one full pipeline replication on the reference synthetic scenario
struct ScenarioRun {
    FairProjectionFamily family;
    SweepResult result;
};

ScenarioRun run_reference(std::uint64_t seed, Index n = 5000) {
    SynthConfig cfg;
    cfg.n = n;
    cfg.seed = seed;
    Dataset data = gen_linear_dgp(cfg);
    split_dataset(data, {0.7, 0.1, 0.2}, seed);
    standardize_train(data);
    RunConfig rc;
    rc.seed = seed;
    rc.decomposition.seed = seed;
    ScenarioRun run;
    run.family = estimate_family(data.x_rows(Split::Train), data.y_rows(Split::Train),
                                 data.z_rows(Split::Train), rc.decomposition, false);
    run.result = sweep(run.family, data, ModelKind::Linear, rc);
    return run;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
    const int p = 10, q = 8, r = 8, s = 6;
    Rng rng(424242);
    Matrix G(p, q + r - s);
    for (Index i = 0; i < G.rows(); ++i) {
        for (Index j = 0; j < G.cols(); ++j) G(i, j) = rng.normal();
    }
    const Matrix A = orthonormalize(G).cols();
    const Matrix A_Y = A.leftCols(q);
    const Matrix A_Z = A.middleCols(q - s, r);
    const SymMatrix MY(A_Y * A_Y.transpose());
    const SymMatrix MZ(A_Z * A_Z.transpose());
    const SymMatrix Sigma = SymMatrix::identity(p);

    const EigenPairs ep = gen_eig(cross_candidate(MY, Sigma, MZ), Sigma, 0.0);
    int positive = 0;
    for (Index i = 0; i < ep.values.size(); ++i) {
        if (ep.values(i) > 1e-10) ++positive;
    }
    const OrthonormalBasis phi = intersection_basis(MY, MZ, Sigma, s, 0.0);
    const double dist = subspace_distance(phi, OrthonormalBasis(A.middleCols(q - s, s)));

    Outcome out;
    out.pass = positive == s && dist < 1e-8;
    out.detail = "positive eigenvalues " + std::to_string(positive) + " (want " + std::to_string(s) +
                 "), distance to the true intersection " + fmt(dist, 12);
    return out;
}

Outcome criterion2() {
    const int seeds = 30;
    std::vector<std::vector<double>> rmse(seeds), gap(seeds), pdist(seeds), wd(seeds);
    int min_s = 1 << 20;
    for (int seed = 0; seed < seeds; ++seed) {
        const ScenarioRun run = run_reference(static_cast<std::uint64_t>(seed));
        min_s = std::min(min_s, run.family.s());
        for (const TradeoffPoint& pt : run.result.points_test) {
            rmse[static_cast<std::size_t>(seed)].push_back(pt.utility);
            pdist[static_cast<std::size_t>(seed)].push_back(pt.param_distance);
            wd[static_cast<std::size_t>(seed)].push_back(pt.wd);
        }
        // group gap needs the grouped utility metrics on the test split
        SynthConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(seed);
        Dataset data = gen_linear_dgp(cfg);
        split_dataset(data, {0.7, 0.1, 0.2}, cfg.seed);
        standardize_train(data);
        const Matrix X_test = data.x_rows(Split::Test);
        const Matrix Y_test = data.y_rows(Split::Test);
        const std::vector<int> z_test = data.z_rows(Split::Test);
        for (std::size_t slot = 0; slot < run.result.m_values.size(); ++slot) {
            const Matrix P = run.family.projection(run.result.m_values[slot]);
            const Matrix pred = predict(run.result.linear_models[slot], X_test * P);
            const UtilityMetrics um = utility_metrics(pred, Y_test, z_test);
            gap[static_cast<std::size_t>(seed)].push_back(um.rmse_gap.value_or(0.0));
        }
    }
    std::vector<double> ms, mean_rmse, mean_gap, mean_pd, mean_wd;
    for (int m = 0; m <= min_s; ++m) {
        ms.push_back(m);
        double a = 0, b = 0, c = 0, d = 0;
        for (int seed = 0; seed < seeds; ++seed) {
            a += rmse[static_cast<std::size_t>(seed)][static_cast<std::size_t>(m)];
            b += gap[static_cast<std::size_t>(seed)][static_cast<std::size_t>(m)];
            c += pdist[static_cast<std::size_t>(seed)][static_cast<std::size_t>(m)];
            d += wd[static_cast<std::size_t>(seed)][static_cast<std::size_t>(m)];
        }
        mean_rmse.push_back(a / seeds);
        mean_gap.push_back(b / seeds);
        mean_pd.push_back(c / seeds);
        mean_wd.push_back(d / seeds);
    }
    const double rho_rmse = spearman(ms, mean_rmse);
    const double rho_gap = spearman(ms, mean_gap);
    const double rho_pd = spearman(ms, mean_pd);
    const double rho_wd = spearman(ms, mean_wd);

    Outcome out;
    out.pass = rho_rmse <= -0.9 && rho_pd <= -0.9 && rho_gap >= 0.9 && rho_wd >= 0.9;
    out.detail = "spearman vs m over " + std::to_string(seeds) + " seeds (levels 0.." +
                 std::to_string(min_s) + "): rmse " + fmt(rho_rmse, 2) + ", param distance " +
                 fmt(rho_pd, 2) + ", rmse gap " + fmt(rho_gap, 2) + ", wd " + fmt(rho_wd, 2);
    return out;
}

Outcome criterion3() {
    // shared-rank recovery on the reference scenario
    const int seeds = 20;
    std::vector<int> s_hats;
    int hits6 = 0;
    for (int seed = 0; seed < seeds; ++seed) {
        SynthConfig cfg;
        cfg.seed = 100 + static_cast<std::uint64_t>(seed);
        Dataset data = gen_linear_dgp(cfg);
        split_dataset(data, {0.7, 0.1, 0.2}, cfg.seed);
        standardize_train(data);
        DecompositionConfig dc;
        dc.seed = cfg.seed;
        const FairProjectionFamily fam = estimate_family(
            data.x_rows(Split::Train), data.y_rows(Split::Train), data.z_rows(Split::Train), dc,
            false);
        s_hats.push_back(fam.s_hat);
        hits6 += fam.s_hat == 6;
    }
    std::ostringstream hist;
    for (int v : s_hats) hist << v << " ";

    // misspecified scenario: estimated rank and baseline error profile.
    // Per-seed values are heavy tailed, so the gate uses medians, the
    // summary convention used for the other Monte Carlo figures; means are
    // printed alongside.
    const int seeds63 = 11;
    std::vector<double> s63, rmse63, gap63;
    for (int seed = 0; seed < seeds63; ++seed) {
        SynthConfig cfg;
        cfg.p = 30;
        cfg.q = 30;
        cfg.r = 30;
        cfg.s = 30;
        cfg.misspecified = true;
        cfg.seed = 500 + static_cast<std::uint64_t>(seed);
        Dataset data = gen_misspecified_dgp(cfg);
        split_dataset(data, {0.7, 0.1, 0.2}, cfg.seed);
        standardize_train(data);
        DecompositionConfig dc;
        dc.seed = cfg.seed;
        dc.kmax = 29;
        const FairProjectionFamily fam = estimate_family(
            data.x_rows(Split::Train), data.y_rows(Split::Train), data.z_rows(Split::Train), dc,
            false);
        s63.push_back(fam.s_hat);
        const auto [model, rep] = fit_linear(data.x_rows(Split::Train), data.y_rows(Split::Train));
        const UtilityMetrics um = utility_metrics(predict(model, data.x_rows(Split::Test)),
                                                  data.y_rows(Split::Test), data.z_rows(Split::Test));
        rmse63.push_back(um.rmse);
        gap63.push_back(um.rmse_gap.value_or(0.0));
    }
    const auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    const auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    const double med_s = median(s63), med_rmse = median(rmse63), med_gap = median(gap63);

    const bool pass_61 = hits6 >= static_cast<int>(0.7 * seeds);
    const bool pass_63 = std::abs(med_s - 28.0) <= 1.0 && std::abs(med_rmse - 3.18) <= 0.5 &&
                         std::abs(med_gap - 3.06) <= 0.5;
    Outcome out;
    out.pass = pass_61 && pass_63;
    out.detail = "shared rank = 6 in " + std::to_string(hits6) + "/" + std::to_string(seeds) +
                 " seeds [estimates: " + hist.str() + "]; misspecified over " +
                 std::to_string(seeds63) + " seeds: rank median " + fmt(med_s, 1) +
                 " (want 28±1), baseline rmse median " + fmt(med_rmse) + " mean " +
                 fmt(mean(rmse63)) + " (want 3.18±0.5), gap median " + fmt(med_gap) + " mean " +
                 fmt(mean(gap63)) + " (want 3.06±0.5)";
    return out;
}

Outcome criterion4() {
    // Bayes-linear scenario with the exact projection family
    const int reps = 10;
    const Index n_train = 20000, n_test = 5000;
    const int s = 6;
    std::vector<std::vector<double>> mse(static_cast<std::size_t>(s + 1));
    for (int rep = 0; rep < reps; ++rep) {
        SynthConfig cfg;
        cfg.n = n_train + n_test;
        cfg.shift_scale = 0.0;
        cfg.seed = 900 + static_cast<std::uint64_t>(rep);
        const Dataset data = gen_linear_dgp(cfg);
        const Matrix unshared = data.truth->A_Y.leftCols(2);
        const Matrix shared = data.truth->A_Y.rightCols(6);
        const Matrix X_train = data.X.topRows(n_train);
        const Matrix Y_train = data.Y.topRows(n_train);
        const Matrix X_test = data.X.bottomRows(n_test);
        const Matrix Y_test = data.Y.bottomRows(n_test);
        for (int m = 0; m <= s; ++m) {
            Matrix P = unshared * unshared.transpose();
            P += shared.leftCols(m) * shared.leftCols(m).transpose();
            const auto [model, rep_fit] = fit_linear(X_train * P, Y_train);
            const Matrix pred = predict(model, X_test * P);
            mse[static_cast<std::size_t>(m)].push_back(
                (pred - Y_test).squaredNorm() /
                static_cast<double>(Y_test.rows() * Y_test.cols()));
        }
    }
    std::vector<double> mean(static_cast<std::size_t>(s + 1)), se(static_cast<std::size_t>(s + 1));
    for (int m = 0; m <= s; ++m) {
        const auto& v = mse[static_cast<std::size_t>(m)];
        double mu = 0;
        for (double x : v) mu += x;
        mu /= static_cast<double>(v.size());
        double var = 0;
        for (double x : v) var += (x - mu) * (x - mu);
        var /= static_cast<double>(v.size() - 1);
        mean[static_cast<std::size_t>(m)] = mu;
        se[static_cast<std::size_t>(m)] = std::sqrt(var / static_cast<double>(v.size()));
    }
    bool monotone = true;
    for (int m = 1; m <= s; ++m) {
        const double tol = 2.0 * std::hypot(se[static_cast<std::size_t>(m)], se[static_cast<std::size_t>(m - 1)]);
        if (mean[static_cast<std::size_t>(m)] > mean[static_cast<std::size_t>(m - 1)] + tol) monotone = false;
    }
    const double final_mse = mean[static_cast<std::size_t>(s)];
    Outcome out;
    out.pass = monotone && std::abs(final_mse - 0.25) <= 0.03;
    std::ostringstream curve;
    for (double v : mean) curve << fmt(v) << " ";
    out.detail = "per-coordinate mse by level: " + curve.str() + "(monotone " +
                 (monotone ? "yes" : "no") + ", final " + fmt(final_mse) + " want 0.25±0.03)";
    return out;
}

Outcome criterion5() {
    // exact identity between the two estimator forms
    double worst_identity = 0.0;
    Rng rng(777);
    for (int trial = 0; trial < 50; ++trial) {
        const Index n = 40 + static_cast<Index>(rng.below(60));
        Matrix f(n, 1);
        std::vector<int> z(static_cast<std::size_t>(n));
        bool both = false;
        for (Index i = 0; i < n; ++i) {
            f(i, 0) = rng.normal();
            z[static_cast<std::size_t>(i)] = rng.uniform() < 0.3;
        }
        both = std::count(z.begin(), z.end(), 1) > 0 && std::count(z.begin(), z.end(), 0) > 0;
        if (!both) continue;
        worst_identity = std::max(worst_identity, std::abs(dcov2(f, z) - dcov2_binary_form(f, z)));
    }

    // convergence of the indicator case toward the closed-form population value
    Matrix f_ind(4000, 1);
    std::vector<int> z_ind(4000);
    Rng rng2(778);
    for (Index i = 0; i < 4000; ++i) {
        z_ind[static_cast<std::size_t>(i)] = static_cast<int>(rng2.below(2));
        f_ind(i, 0) = z_ind[static_cast<std::size_t>(i)];
    }
    const double indicator = dcov2(f_ind, z_ind, 4000);

    // fairness floor across the reference scenario
    const int seeds = 20;
    int floor_hits = 0;
    for (int seed = 0; seed < seeds; ++seed) {
        const ScenarioRun run = run_reference(2000 + static_cast<std::uint64_t>(seed));
        int argmin = -1;
        double best = std::numeric_limits<double>::infinity();
        for (const TradeoffPoint& pt : run.result.report.points) {
            if (pt.dcov2 < best) {
                best = pt.dcov2;
                argmin = pt.m;
            }
        }
        floor_hits += argmin == 0;
    }

    Outcome out;
    const bool pass_identity = worst_identity < 1e-12;
    const bool pass_indicator = std::abs(indicator - 0.25) <= 0.02;
    const bool pass_floor = floor_hits >= static_cast<int>(0.9 * seeds);
    out.pass = pass_identity && pass_indicator && pass_floor;
    out.detail = "estimator-form identity max |diff| " + fmt(worst_identity, 15) +
                 "; indicator value " + fmt(indicator) + " (want 0.25±0.02); floor at level 0 in " +
                 std::to_string(floor_hits) + "/" + std::to_string(seeds) + " seeds";
    return out;
}

struct RealDataResult {
    double base_acc = 0, base_dp = 0, base_mcdp = 0;
    double sel_acc = 0, sel_dp = 0, sel_mcdp = 0;
    int seeds = 0;
};

RealDataResult run_real(const CsvSpec& spec, int seeds) {
    const Dataset base_data = load_csv(spec);
    RealDataResult acc;
    for (int seed = 0; seed < seeds; ++seed) {
        Dataset data = base_data;
        split_dataset(data, {0.7, 0.1, 0.2}, static_cast<std::uint64_t>(seed));
        standardize_train(data);
        RunConfig rc;
        rc.seed = static_cast<std::uint64_t>(seed);
        rc.decomposition.seed = rc.seed;
        rc.model = ModelKind::Softmax;
        const FairProjectionFamily fam = estimate_family(
            data.x_rows(Split::Train), data.y_rows(Split::Train), data.z_rows(Split::Train),
            rc.decomposition, true);
        SweepResult result = sweep(fam, data, ModelKind::Softmax, rc);
        select(result.report, rc.rule);
        const TradeoffPoint base = evaluate_point(result, fam, data, -1, Split::Test, rc);
        const TradeoffPoint sel = evaluate_test(result, fam, data, rc);
        acc.base_acc += base.utility;
        acc.base_dp += base.dp;
        acc.base_mcdp += base.mcdp;
        acc.sel_acc += sel.utility;
        acc.sel_dp += sel.dp;
        acc.sel_mcdp += sel.mcdp;
        acc.seeds++;
    }
    const double k = acc.seeds;
    acc.base_acc /= k;
    acc.base_dp /= k;
    acc.base_mcdp /= k;
    acc.sel_acc /= k;
    acc.sel_dp /= k;
    acc.sel_mcdp /= k;
    return acc;
}

Outcome criterion6() {
    const std::string adult_path = "data/adult.csv";
    const std::string bank_path = "data/bank.csv";
    Outcome out;
    if (!fs::exists(adult_path) || !fs::exists(bank_path)) {
        out.pass = false;
        out.detail = "required datasets not found (" + adult_path + ", " + bank_path +
                     "); run tools/fetch_datasets.sh to download and normalize them";
        return out;
    }

    CsvSpec adult;
    adult.path = adult_path;
    adult.targets = {"income"};
    adult.target_positive = ">50K";
    adult.sensitive = "sex";
    adult.sensitive_positive = "Female";
    adult.categoricals = {"workclass", "education", "marital-status", "occupation",
                          "relationship", "race", "native-country"};
    adult.drop = {"fnlwgt"};

    CsvSpec bank;
    bank.path = bank_path;
    bank.targets = {"y"};
    bank.target_positive = "yes";
    bank.sensitive = "age";
    bank.sensitive_less_than = 25.0;
    bank.categoricals = {"job", "marital", "education", "default", "housing", "loan",
                         "contact", "month", "poutcome"};

    const RealDataResult a = run_real(adult, 20);
    const RealDataResult b = run_real(bank, 20);

    const bool adult_base = std::abs(a.base_acc - 84.9) <= 2.0 && std::abs(a.base_dp - 17.4) <= 3.0 &&
                            std::abs(a.base_mcdp - 35.1) <= 5.0;
    const bool adult_sel = a.sel_dp <= 0.5 * a.base_dp && a.sel_mcdp <= 0.5 * a.base_mcdp &&
                           a.sel_acc >= 0.9 * a.base_acc;
    const bool bank_base = std::abs(b.base_acc - 91.2) <= 2.0 && std::abs(b.base_dp - 6.7) <= 2.0;
    const bool bank_sel = b.sel_dp <= 2.0 && b.sel_acc >= 0.95 * b.base_acc;

    out.pass = adult_base && adult_sel && bank_base && bank_sel;
    out.detail = "adult baseline acc " + fmt(a.base_acc, 1) + " dp " + fmt(a.base_dp, 1) +
                 " mcdp " + fmt(a.base_mcdp, 1) + ", selected acc " + fmt(a.sel_acc, 1) + " dp " +
                 fmt(a.sel_dp, 1) + " mcdp " + fmt(a.sel_mcdp, 1) + "; bank baseline acc " +
                 fmt(b.base_acc, 1) + " dp " + fmt(b.base_dp, 1) + ", selected acc " +
                 fmt(b.sel_acc, 1) + " dp " + fmt(b.sel_dp, 1);
    return out;
}

Outcome criterion7() {
    // closed-form eigenvector influence vs end-to-end differences
    double worst_eig = 0.0;
    {
        Rng rng(31);
        Matrix X(200, 4);
        for (Index i = 0; i < X.rows(); ++i) {
            for (Index j = 0; j < X.cols(); ++j) X(i, j) = rng.normal();
        }
        const Vector uniform = Vector::Constant(X.rows(), 1.0 / 200.0);
        const SymMatrix S = weighted_covariance(X, uniform);
        const auto cov_fn = [&X](const Vector& w) -> Matrix { return weighted_covariance(X, w).mat(); };
        for (const int i : {0, 1, 3}) {
            const auto vec_fn = [&X, i](const Vector& w) -> Matrix {
                return sym_eig(weighted_covariance(X, w)).vectors.cols().col(i);
            };
            for (Index pt = 0; pt < X.rows(); pt += 40) {
                const SymMatrix S_star(gateaux_fd(cov_fn, X.rows(), pt, 1e-5));
                const Vector closed = eigvec_if(S, S_star, i, 4);
                const Matrix fd = gateaux_fd(vec_fn, X.rows(), pt, 1e-5);
                worst_eig = std::max(worst_eig, (closed - fd).norm() / std::max(1e-12, fd.norm()));
            }
        }
    }

    // product rule for the cross matrix vs the direct difference
    double worst_cross = 0.0;
    {
        SynthConfig cfg;
        cfg.n = 400;
        cfg.p = 8;
        cfg.K = 3;
        cfg.q = 5;
        cfg.r = 4;
        cfg.s = 3;
        cfg.seed = 32;
        const Dataset data = gen_linear_dgp(cfg);
        Matrix X = data.X;
        const Eigen::RowVectorXd mean = X.colwise().mean();
        X = X.rowwise() - mean;
        const FamilyFunctional fam(X, data.Y, data.Z, SdrMethod::SAVE, 9, kDefaultRidge, 3, 2, 2,
                                   cfg.seed);
        const Index n = X.rows();
        const Vector uniform = Vector::Constant(n, 1.0 / static_cast<double>(n));
        const auto my = [&](const Vector& w) { return fam.candidate_y(w).mat(); };
        const auto mz = [&](const Vector& w) { return fam.candidate_z(w).mat(); };
        const auto cov = [&](const Vector& w) { return fam.covariance_fn(w).mat(); };
        const auto cross = [&](const Vector& w) { return fam.cross(w).mat(); };
        for (Index pt = 0; pt < n; pt += 100) {
            const SymMatrix assembled = cross_if(
                fam.candidate_y(uniform), fam.covariance_fn(uniform), fam.candidate_z(uniform),
                SymMatrix(gateaux_fd(my, n, pt, 1e-5)), SymMatrix(gateaux_fd(cov, n, pt, 1e-5)),
                SymMatrix(gateaux_fd(mz, n, pt, 1e-5)));
            const Matrix direct = gateaux_fd(cross, n, pt, 1e-5);
            const Matrix direct_sym = 0.5 * (direct + direct.transpose());
            worst_cross = std::max(worst_cross,
                                   (assembled.mat() - direct_sym).norm() / std::max(1e-12, direct_sym.norm()));
        }
    }

    // centered influence samples for the fair-model parameters
    bool centered = true;
    double worst_t = 0.0;
    {
        SynthConfig cfg;
        cfg.n = 400;
        cfg.p = 8;
        cfg.K = 3;
        cfg.q = 5;
        cfg.r = 4;
        cfg.s = 3;
        cfg.seed = 33;
        const Dataset data = gen_linear_dgp(cfg);
        Matrix X = data.X;
        const Eigen::RowVectorXd mean = X.colwise().mean();
        const Eigen::RowVectorXd sd = ((X.rowwise() - mean).array().square().colwise().sum() /
                                       static_cast<double>(X.rows() - 1)).sqrt();
        X = (X.rowwise() - mean).array().rowwise() / sd.array();
        const FamilyFunctional fam(X, data.Y, data.Z, SdrMethod::SAVE, 9, kDefaultRidge, 3, 2, 2,
                                   cfg.seed);
        const Vector uniform = Vector::Constant(X.rows(), 1.0 / static_cast<double>(X.rows()));
        const int m = 1;
        const LinearThetaInfluence inf(X, data.Y, fam.projection(uniform, m));
        std::vector<Vector> ifs;
        Vector mu = Vector::Zero(inf.param_count());
        for (Index i = 0; i < X.rows(); ++i) {
            ifs.push_back(inf.evaluate(i, fam.projection_fd_at(i, m).mat()));
            mu += ifs.back();
        }
        mu /= static_cast<double>(X.rows());
        Vector sdv = Vector::Zero(mu.size());
        for (const Vector& v : ifs) sdv += (v - mu).cwiseProduct(v - mu);
        sdv = (sdv / static_cast<double>(X.rows() - 1)).cwiseSqrt();
        for (Index c = 0; c < mu.size(); ++c) {
            const double se = sdv(c) / std::sqrt(static_cast<double>(X.rows()));
            const double t = std::abs(mu(c)) / std::max(se, 1e-12);
            worst_t = std::max(worst_t, t);
            if (t > 3.0) centered = false;
        }
    }

    // root-n scaling of the fair estimator at both ends of the family
    double frac_m6 = 0.0, frac_m0 = 0.0;
    {
        SynthConfig dgp;
        for (const int m : {6, 0}) {
            McEstimatorSpec est;
            est.m = m;
            est.with_plugin = false;
            const AsymptoticReport rep =
                mc_normality(dgp, est, {500, 2000}, 200, 9000 + static_cast<std::uint64_t>(m));
            const Vector& ratios = rep.scaling_ratios[0];
            int in_band = 0;
            for (Index c = 0; c < ratios.size(); ++c) {
                if (ratios(c) >= 1.7 && ratios(c) <= 2.3) ++in_band;
            }
            const double frac = static_cast<double>(in_band) / static_cast<double>(ratios.size());
            (m == 6 ? frac_m6 : frac_m0) = frac;
        }
    }

    Outcome out;
    const bool pass_eig = worst_eig < 1e-3;
    const bool pass_cross = worst_cross < 1e-3;
    const bool pass_scale = frac_m6 >= 0.9 && frac_m0 >= 0.9;
    out.pass = pass_eig && pass_cross && centered && pass_scale;
    out.detail = "eigvec if rel err " + fmt(worst_eig, 6) + "; product-rule rel err " +
                 fmt(worst_cross, 6) + "; max |t| of influence means " + fmt(worst_t, 2) +
                 "; scaling in [1.7,2.3]: " + fmt(100 * frac_m6, 0) + "% at m=6, " +
                 fmt(100 * frac_m0, 0) + "% at m=0";
    return out;
}

Outcome criterion8() {
    std::vector<std::string> failures;

    // projector idempotency and nesting across an estimated family
    {
        const ScenarioRun run = run_reference(4242, 3000);
        for (int m = 0; m <= run.family.s(); ++m) {
            const Matrix P = run.family.projection(m);
            if ((P * P - P).cwiseAbs().maxCoeff() > 1e-6) failures.push_back("idempotency");
            if (m > 0) {
                const Matrix prev = run.family.projection(m - 1);
                if ((P * prev - prev).cwiseAbs().maxCoeff() > 1e-6) failures.push_back("nesting");
            }
        }
    }

    // containment of the unshared directions at the oracle
    {
        Rng rng(99);
        Matrix G(10, 10);
        for (Index i = 0; i < 10; ++i) {
            for (Index j = 0; j < 10; ++j) G(i, j) = rng.normal();
        }
        const Matrix A = orthonormalize(G).cols();
        const Matrix A_Y = A.leftCols(8);
        const Matrix A_Z = A.middleCols(2, 8);
        const SymMatrix Qz = residual_projection(OrthonormalBasis(A_Z));
        const OrthonormalBasis limit = orthonormalize(Qz.mat() * A_Y);
        const Matrix unshared = A_Y.leftCols(2);
        const Matrix resid = unshared - limit.cols() * (limit.cols().transpose() * unshared);
        if (resid.norm() > 1e-8) failures.push_back("containment");
    }

    // metric zero cases on group-identical predictions
    {
        Matrix probs(6, 2);
        probs << 0.2, 0.8, 0.5, 0.5, 0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.9, 0.1;
        GroupedPredictions gp{probs, {1, 0, 1, 1, 0, 1}, {0, 0, 0, 1, 1, 1}};
        if (dp_gap(gp) != 0.0) failures.push_back("dp zero case");
        if (mcdp(gp) != 0.0) failures.push_back("mcdp zero case");
        Matrix f(6, 1);
        f << 1, 2, 3, 1, 2, 3;
        if (std::abs(dcov2(f, gp.z)) > 1e-12) failures.push_back("dcov zero case");
    }

    // selection tie-break and fallback
    {
        SweepReport report;
        TradeoffPoint base;
        base.m = -1;
        base.utility = 90.0;
        report.baseline = base;
        for (int m = 0; m < 3; ++m) {
            TradeoffPoint pt;
            pt.m = m;
            pt.utility = 89.0;
            pt.dp = pt.mcdp = pt.dcov2 = 4.0;
            report.points.push_back(pt);
        }
        SelectionRule rule;
        rule.tau = 0.95;
        rule.metric = FairnessMetric::DP;
        if (select(report, rule) != 0) failures.push_back("tie-break");

        SweepReport starved = report;
        for (auto& pt : starved.points) pt.utility = 10.0;
        starved.fallback_used = false;
        starved.flags.clear();
        if (select(starved, rule) != 2 || !starved.fallback_used) failures.push_back("fallback");
    }

    Outcome out;
    out.pass = failures.empty();
    if (out.pass) {
        out.detail = "idempotency, nesting, containment, metric zero cases, tie-break, fallback";
    } else {
        out.detail = "failed:";
        for (const auto& f : failures) out.detail += " " + f;
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    std::vector<int> which;
    if (argc < 2 || std::string(argv[1]) == "all") {
        which = {1, 2, 3, 4, 5, 6, 7, 8};
    } else {
        which.push_back(std::atoi(argv[1]));
    }
    int failures = 0;
    for (const int c : which) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        switch (c) {
            case 1: out = criterion1(); break;
            case 2: out = criterion2(); break;
            case 3: out = criterion3(); break;
            case 4: out = criterion4(); break;
            case 5: out = criterion5(); break;
            case 6: out = criterion6(); break;
            case 7: out = criterion7(); break;
            case 8: out = criterion8(); break;
            default:
                std::cerr << "unknown criterion " << c << "\n";
                return 1;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (out.pass ? "[PASS]" : "[FAIL]") << " criterion " << c << " (" << fmt(secs, 1)
                  << "s): " << out.detail << "\n";
        failures += !out.pass;
    }
    return failures;
}
