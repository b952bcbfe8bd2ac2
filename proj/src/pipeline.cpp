#include "sfp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "sfp/parallel.hpp"
#include "sfp/rng.hpp"
#include "sfp/version.hpp"

namespace sfp {

std::string to_string(FairnessMetric m) {
    switch (m) {
        case FairnessMetric::DP: return "dp";
        case FairnessMetric::TPR: return "tpr";
        case FairnessMetric::MCDP: return "mcdp";
        case FairnessMetric::DCov: return "dcov";
    }
    return "?";
}

FairnessMetric fairness_metric_from(const std::string& name) {
    if (name == "dp") return FairnessMetric::DP;
    if (name == "tpr") return FairnessMetric::TPR;
    if (name == "mcdp") return FairnessMetric::MCDP;
    if (name == "dcov") return FairnessMetric::DCov;
    throw InputError("unknown fairness metric '" + name + "'");
}

Json TradeoffPoint::to_json() const {
    Json j;
    j["m"] = m;
    j["utility"] = utility;
    j["utility_kind"] = utility_is_rmse ? "rmse" : "accuracy";
    j["dp"] = dp;
    if (tpr) j["tpr"] = *tpr;
    else j["tpr"] = nullptr;
    j["mcdp"] = mcdp;
    j["dcov2"] = dcov2;
    j["param_distance"] = param_distance;
    j["wd"] = wd;
    j["rank"] = rank;
    return j;
}

RunConfig RunConfig::from_json(const Json& j) {
    static const std::set<std::string> known = {
        "sdr_method", "H", "bootstrap_B", "kmax", "ridge", "tau", "selection_metric",
        "fallback", "seed", "model", "l2", "tol", "max_iter", "m_step", "dcov_cap",
        "threads", "split_fractions", "data", "schema_version"};
    for (auto it = j.cbegin(); it != j.cend(); ++it) {
        if (!known.count(it.key())) throw SchemaError("config: unknown key '" + it.key() + "'");
    }
    RunConfig cfg;
    if (j.contains("sdr_method")) {
        const std::string m = j["sdr_method"].get<std::string>();
        if (m == "sir") cfg.decomposition.method = SdrMethod::SIR;
        else if (m == "save") cfg.decomposition.method = SdrMethod::SAVE;
        else throw SchemaError("config: sdr_method must be sir or save");
    }
    if (j.contains("H")) cfg.decomposition.H = j["H"].get<int>();
    if (j.contains("bootstrap_B")) cfg.decomposition.bootstrap_B = j["bootstrap_B"].get<int>();
    if (j.contains("kmax")) cfg.decomposition.kmax = j["kmax"].get<int>();
    if (j.contains("ridge")) cfg.decomposition.ridge = j["ridge"].get<double>();
    if (j.contains("tau")) cfg.rule.tau = j["tau"].get<double>();
    if (j.contains("selection_metric")) cfg.rule.metric = fairness_metric_from(j["selection_metric"].get<std::string>());
    if (j.contains("fallback")) {
        const std::string f = j["fallback"].get<std::string>();
        if (f == "full") cfg.rule.fallback = SelectionRule::Fallback::Full;
        else if (f == "best_utility") cfg.rule.fallback = SelectionRule::Fallback::BestUtility;
        else throw SchemaError("config: fallback must be full or best_utility");
    }
    if (j.contains("seed")) {
        cfg.seed = j["seed"].get<std::uint64_t>();
        cfg.decomposition.seed = cfg.seed;
    }
    if (j.contains("model")) {
        const std::string m = j["model"].get<std::string>();
        if (m == "linear") cfg.model = ModelKind::Linear;
        else if (m == "softmax") cfg.model = ModelKind::Softmax;
        else throw SchemaError("config: model must be linear or softmax");
    }
    if (j.contains("l2")) cfg.softmax.l2 = j["l2"].get<double>();
    if (j.contains("tol")) cfg.softmax.tol = j["tol"].get<double>();
    if (j.contains("max_iter")) cfg.softmax.max_iter = j["max_iter"].get<int>();
    if (j.contains("m_step")) cfg.m_step = j["m_step"].get<int>();
    if (j.contains("dcov_cap")) cfg.dcov_cap = j["dcov_cap"].get<Index>();
    if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
    if (j.contains("split_fractions")) {
        const auto f = j["split_fractions"].get<std::vector<double>>();
        if (f.size() != 3) throw SchemaError("config: split_fractions needs 3 entries");
        cfg.split_fractions = {f[0], f[1], f[2]};
    }
    if (cfg.rule.tau <= 0.0 || cfg.rule.tau > 1.0) throw SchemaError("config: tau must be in (0, 1]");
    if (cfg.m_step < 1) throw SchemaError("config: m_step must be >= 1");
    return cfg;
}

Json RunConfig::to_json() const {
    Json j;
    j["sdr_method"] = to_string(decomposition.method);
    j["H"] = decomposition.H;
    j["bootstrap_B"] = decomposition.bootstrap_B;
    j["kmax"] = decomposition.kmax;
    j["ridge"] = decomposition.ridge;
    j["tau"] = rule.tau;
    j["selection_metric"] = to_string(rule.metric);
    j["fallback"] = rule.fallback == SelectionRule::Fallback::Full ? "full" : "best_utility";
    j["seed"] = seed;
    j["model"] = model == ModelKind::Linear ? "linear" : "softmax";
    j["l2"] = softmax.l2;
    j["tol"] = softmax.tol;
    j["max_iter"] = softmax.max_iter;
    j["m_step"] = m_step;
    j["dcov_cap"] = static_cast<std::int64_t>(dcov_cap);
    j["threads"] = threads;
    j["split_fractions"] = {split_fractions[0], split_fractions[1], split_fractions[2]};
    return j;
}

namespace {

std::vector<int> hard_labels(const Matrix& onehot) {
    std::vector<int> out(static_cast<std::size_t>(onehot.rows()));
    for (Index i = 0; i < onehot.rows(); ++i) {
        Index arg = 0;
        onehot.row(i).maxCoeff(&arg);
        out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return out;
}

double frobenius_distance(const Matrix& a, const Matrix& b) { return (a - b).norm(); }

struct EvalInput {
    const Matrix& X;
    const Matrix& Y;
    const std::vector<int>& z;
};

TradeoffPoint evaluate_model(const SweepResult& result, int slot, int m, const Matrix& P,
                             const EvalInput& in, const RunConfig& config) {
    TradeoffPoint pt;
    pt.m = m;
    pt.rank = static_cast<int>(std::lround(P.trace()));
    const Matrix Xp = m < 0 ? in.X : Matrix(in.X * P);

    Matrix scores;
    const std::uint64_t dseed = mix64(config.seed) ^ static_cast<std::uint64_t>(m + 1);
    if (result.kind == ModelKind::Linear) {
        const LinearModel& model = m < 0 ? result.baseline_linear
                                         : result.linear_models[static_cast<std::size_t>(slot)];
        scores = predict(model, Xp);
        const UtilityMetrics um = utility_metrics(scores, in.Y, in.z);
        pt.utility = um.rmse;
        pt.utility_is_rmse = true;
        pt.param_distance = m < 0 ? 0.0 : frobenius_distance(model.theta, result.baseline_linear.theta);
        // score-scale analogs over all K outputs; TPR needs hard labels
        Eigen::RowVectorXd mean0 = Eigen::RowVectorXd::Zero(scores.cols());
        Eigen::RowVectorXd mean1 = Eigen::RowVectorXd::Zero(scores.cols());
        Index n0 = 0, n1 = 0;
        for (Index i = 0; i < scores.rows(); ++i) {
            if (in.z[static_cast<std::size_t>(i)] == 0) { mean0 += scores.row(i); ++n0; }
            else { mean1 += scores.row(i); ++n1; }
        }
        mean0 /= static_cast<double>(n0);
        mean1 /= static_cast<double>(n1);
        pt.dp = std::sqrt((mean1 - mean0).squaredNorm() / static_cast<double>(scores.cols())) * 100.0;
        double acc = 0.0;
        for (Index jcol = 0; jcol < scores.cols(); ++jcol) {
            std::vector<double> g0, g1;
            for (Index i = 0; i < scores.rows(); ++i) {
                (in.z[static_cast<std::size_t>(i)] == 0 ? g0 : g1).push_back(scores(i, jcol));
            }
            std::sort(g0.begin(), g0.end());
            std::sort(g1.begin(), g1.end());
            double best = 0.0;
            std::size_t a = 0, b = 0;
            while (a < g0.size() || b < g1.size()) {
                double v;
                if (b >= g1.size() || (a < g0.size() && g0[a] <= g1[b])) v = g0[a];
                else v = g1[b];
                while (a < g0.size() && g0[a] <= v) ++a;
                while (b < g1.size() && g1[b] <= v) ++b;
                best = std::max(best, std::abs(static_cast<double>(a) / static_cast<double>(g0.size()) -
                                               static_cast<double>(b) / static_cast<double>(g1.size())));
            }
            acc += best * best;
        }
        pt.mcdp = std::sqrt(acc / static_cast<double>(scores.cols())) * 100.0;
        pt.tpr = std::nullopt;
    } else {
        const SoftmaxModel& model = m < 0 ? result.baseline_softmax
                                          : result.softmax_models[static_cast<std::size_t>(slot)];
        scores = predict(model, Xp);
        const UtilityMetrics um = utility_metrics(scores, in.Y, in.z);
        pt.utility = um.accuracy;
        pt.utility_is_rmse = false;
        const Matrix& base_w = result.baseline_softmax.weights;
        pt.param_distance = m < 0 ? 0.0
                                  : frobenius_distance(model.weights.topRows(model.weights.rows() - 1),
                                                       base_w.topRows(base_w.rows() - 1));
        GroupedPredictions gp{scores, hard_labels(in.Y), in.z};
        pt.dp = dp_gap(gp);
        try {
            pt.tpr = tpr_gap(gp).value;
        } catch (const MetricError&) {
            pt.tpr = std::nullopt;
        }
        pt.mcdp = mcdp(gp);
    }
    pt.dcov2 = dcov2(scores, in.z, config.dcov_cap, dseed);

    double wd_acc = 0.0;
    for (Index j = 0; j < Xp.cols(); ++j) {
        std::vector<double> g0, g1;
        for (Index i = 0; i < Xp.rows(); ++i) {
            (in.z[static_cast<std::size_t>(i)] == 0 ? g0 : g1).push_back(Xp(i, j));
        }
        wd_acc += wasserstein1(g0, g1);
    }
    pt.wd = wd_acc / static_cast<double>(Xp.cols());
    return pt;
}

double fairness_value(const TradeoffPoint& pt, FairnessMetric metric) {
    switch (metric) {
        case FairnessMetric::DP: return pt.dp;
        case FairnessMetric::TPR:
            if (!pt.tpr) throw MetricError("select: TPR missing for a point");
            return *pt.tpr;
        case FairnessMetric::MCDP: return pt.mcdp;
        case FairnessMetric::DCov: return pt.dcov2;
    }
    throw InputError("select: bad metric");
}

bool feasible(const TradeoffPoint& pt, const TradeoffPoint& baseline, double tau) {
    if (pt.utility_is_rmse) return pt.utility < baseline.utility / tau;
    return pt.utility > tau * baseline.utility;
}

} // namespace

SweepResult sweep(const FairProjectionFamily& family, const Dataset& data, ModelKind kind,
                  const RunConfig& config) {
    const Matrix X_train = data.x_rows(Split::Train);
    const Matrix Y_train = data.y_rows(Split::Train);
    const std::vector<int> z_train = data.z_rows(Split::Train);
    const Matrix X_val = data.x_rows(Split::Val);
    const Matrix Y_val = data.y_rows(Split::Val);
    const std::vector<int> z_val = data.z_rows(Split::Val);
    const Matrix X_test = data.x_rows(Split::Test);
    const Matrix Y_test = data.y_rows(Split::Test);
    const std::vector<int> z_test = data.z_rows(Split::Test);

    SweepResult result;
    result.kind = kind;
    for (int m = 0; m <= family.s(); m += config.m_step) result.m_values.push_back(m);
    if (result.m_values.empty() || result.m_values.back() != family.s()) {
        result.m_values.push_back(family.s());
    }
    const int n_models = static_cast<int>(result.m_values.size());

    const std::vector<int> train_labels = kind == ModelKind::Softmax ? hard_labels(Y_train)
                                                                     : std::vector<int>{};
    if (kind == ModelKind::Linear) {
        result.baseline_linear = fit_linear(X_train, Y_train).first;
        result.linear_models.resize(static_cast<std::size_t>(n_models));
    } else {
        result.baseline_softmax = fit_softmax(X_train, train_labels, config.softmax).first;
        result.softmax_models.resize(static_cast<std::size_t>(n_models));
    }
    parallel_for(n_models, [&](int slot) {
        const int m = result.m_values[static_cast<std::size_t>(slot)];
        if (kind == ModelKind::Linear) {
            const Matrix Xp = X_train * family.projection(m);
            result.linear_models[static_cast<std::size_t>(slot)] = fit_linear(Xp, Y_train).first;
        } else {
            // Fit in the projection's orthonormal basis and map back: features
            // lie inside the span, so the regularized optimum is identical and
            // the reduced Newton system is much smaller.
            const Index p = X_train.cols();
            const Index d = family.unshared.rank();
            Matrix basis(p, d + m);
            basis.leftCols(d) = family.unshared.cols();
            basis.rightCols(m) = family.shared.cols().leftCols(m);
            const SoftmaxModel reduced =
                fit_softmax(X_train * basis, train_labels, config.softmax).first;
            SoftmaxModel full;
            full.classes = reduced.classes;
            full.weights = Matrix::Zero(p + 1, reduced.classes);
            full.weights.topRows(p) = basis * reduced.weights.topRows(d + m);
            full.weights.row(p) = reduced.weights.row(d + m);
            result.softmax_models[static_cast<std::size_t>(slot)] = std::move(full);
        }
    }, config.threads);

    const EvalInput val{X_val, Y_val, z_val};
    const EvalInput test{X_test, Y_test, z_test};
    const Matrix eye = Matrix::Identity(data.p(), data.p());
    result.report.baseline = evaluate_model(result, -1, -1, eye, val, config);
    for (int slot = 0; slot < n_models; ++slot) {
        const int m = result.m_values[static_cast<std::size_t>(slot)];
        const Matrix P = family.projection(m);
        result.report.points.push_back(evaluate_model(result, slot, m, P, val, config));
        result.points_test.push_back(evaluate_model(result, slot, m, P, test, config));
    }
    result.report.rule = config.rule;
    return result;
}

int select(SweepReport& report, const SelectionRule& rule) {
    if (report.points.empty()) throw InputError("select: empty report");
    report.rule = rule;
    int best = -1;
    double best_fair = std::numeric_limits<double>::infinity();
    for (const TradeoffPoint& pt : report.points) {
        if (!feasible(pt, report.baseline, rule.tau)) continue;
        const double f = fairness_value(pt, rule.metric);
        if (f < best_fair) {
            best_fair = f;
            best = pt.m;
        }
    }
    report.fallback_used = best < 0;
    if (best < 0) {
        if (rule.fallback == SelectionRule::Fallback::Full) {
            best = report.points.back().m;
            report.flags.push_back("no point met the utility floor; kept the full projection");
        } else {
            double best_util = -std::numeric_limits<double>::infinity();
            for (const TradeoffPoint& pt : report.points) {
                const double u = pt.utility_is_rmse ? -pt.utility : pt.utility;
                if (u > best_util) {
                    best_util = u;
                    best = pt.m;
                }
            }
            report.flags.push_back("no point met the utility floor; kept the best-utility point");
        }
    } else {
        // the winner must be weakly best among feasible points
        for (const TradeoffPoint& pt : report.points) {
            if (feasible(pt, report.baseline, rule.tau) &&
                fairness_value(pt, rule.metric) < best_fair - 1e-12) {
                throw Error("select: internal invariant violated");
            }
        }
    }
    report.selected_m = best;
    return best;
}

TradeoffPoint evaluate_point(const SweepResult& result, const FairProjectionFamily& family,
                             const Dataset& data, int m, Split split, const RunConfig& config) {
    const Matrix X_s = data.x_rows(split);
    const Matrix Y_s = data.y_rows(split);
    const std::vector<int> z_s = data.z_rows(split);
    const EvalInput in{X_s, Y_s, z_s};
    if (m < 0) {
        return evaluate_model(result, -1, -1, Matrix::Identity(data.p(), data.p()), in, config);
    }
    const auto it = std::find(result.m_values.begin(), result.m_values.end(), m);
    if (it == result.m_values.end()) throw InputError("evaluate_point: m was not swept");
    const int slot = static_cast<int>(it - result.m_values.begin());
    return evaluate_model(result, slot, m, family.projection(m), in, config);
}

TradeoffPoint evaluate_test(const SweepResult& result, const FairProjectionFamily& family,
                            const Dataset& data, const RunConfig& config) {
    if (!result.report.selected_m) throw InputError("evaluate_test: no selected model");
    return evaluate_point(result, family, data, *result.report.selected_m, Split::Test, config);
}

namespace {

Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

Json sweep_report_to_json(const SweepResult& result, const FairProjectionFamily& family,
                          const RunConfig& config, const Dataset& data) {
    Json j;
    j["baseline"] = result.report.baseline.to_json();
    Json pts = Json::array();
    for (const auto& pt : result.report.points) pts.push_back(pt.to_json());
    j["points"] = pts;
    Json pts_test = Json::array();
    for (const auto& pt : result.points_test) pts_test.push_back(pt.to_json());
    j["points_test"] = pts_test;
    if (result.report.selected_m) j["selected_m"] = *result.report.selected_m;
    else j["selected_m"] = nullptr;
    j["fallback_used"] = result.report.fallback_used;
    j["flags"] = result.report.flags;
    j["family"] = {
        {"s_hat", family.s_hat},
        {"r_hat", family.r_hat},
        {"d_hat", family.d_hat},
        {"unshared", matrix_to_json(family.unshared.cols())},
        {"shared", matrix_to_json(family.shared.cols())},
        {"warnings", family.warnings},
        {"slicing", "kmeans"},
    };
    if (result.report.selected_m) {
        const int m = *result.report.selected_m;
        const auto it = std::find(result.m_values.begin(), result.m_values.end(), m);
        const auto slot = static_cast<std::size_t>(it - result.m_values.begin());
        Json models;
        if (result.kind == ModelKind::Linear) {
            models["kind"] = "linear";
            models["selected"] = {{"theta", matrix_to_json(result.linear_models[slot].theta)},
                                  {"intercept", matrix_to_json(result.linear_models[slot].intercept)}};
            models["baseline"] = {{"theta", matrix_to_json(result.baseline_linear.theta)},
                                  {"intercept", matrix_to_json(result.baseline_linear.intercept)}};
        } else {
            models["kind"] = "softmax";
            models["selected"] = {{"weights", matrix_to_json(result.softmax_models[slot].weights)}};
            models["baseline"] = {{"weights", matrix_to_json(result.baseline_softmax.weights)}};
        }
        j["models"] = models;
    }
    const Json cfg = config.to_json();
    j["provenance"] = {
        {"config", cfg},
        {"config_digest", hex64(json_digest(cfg))},
        {"dataset_digest", hex64(data.digest())},
        {"seed", config.seed},
        {"version", kVersion},
    };
    return j;
}

std::string tradeoff_table(const SweepResult& result) {
    std::ostringstream out;
    out << "# split: test\n";
    out << "m\tutility\tdp\ttpr\tmcdp\tdcov2\tparam_distance\twd\n";
    char buf[64];
    const auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& pt : result.points_test) {
        out << pt.m << '\t' << num(pt.utility) << '\t' << num(pt.dp) << '\t'
            << (pt.tpr ? num(*pt.tpr) : "na") << '\t' << num(pt.mcdp) << '\t' << num(pt.dcov2)
            << '\t' << num(pt.param_distance) << '\t' << num(pt.wd) << '\n';
    }
    return out.str();
}

} // namespace sfp
