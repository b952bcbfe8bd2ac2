#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sfp/influence.hpp"
#include "sfp/parallel.hpp"
#include "sfp/pipeline.hpp"
#include "sfp/rng.hpp"
#include "sfp/version.hpp"

namespace fs = std::filesystem;
using namespace sfp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFlagged = 2;
constexpr int kExitNumeric = 3;

struct DataSpec {
    std::string kind; // "synth" or "csv"
    SynthConfig synth;
    CsvSpec csv;
    bool has_split_column = false;
};

DataSpec parse_data_spec(const Json& j) {
    DataSpec spec;
    if (!j.contains("data")) throw SchemaError("config: missing data section");
    const Json& d = j["data"];
    spec.kind = d.at("kind").get<std::string>();
    static const std::set<std::string> synth_keys = {"kind", "n", "p", "K", "q", "r", "s",
                                                     "noise_y_sd", "shift_scale",
                                                     "nonlinear_coeff", "misspecified", "seed"};
    static const std::set<std::string> csv_keys = {"kind", "path", "targets", "target_positive",
                                                   "sensitive", "sensitive_positive",
                                                   "sensitive_less_than", "categoricals", "drop",
                                                   "split_column", "keep_sensitive_feature"};
    if (spec.kind == "synth") {
        for (auto it = d.cbegin(); it != d.cend(); ++it) {
            if (!synth_keys.count(it.key())) throw SchemaError("config.data: unknown key '" + it.key() + "'");
        }
        SynthConfig& s = spec.synth;
        if (d.contains("n")) s.n = d["n"].get<Index>();
        if (d.contains("p")) s.p = d["p"].get<int>();
        if (d.contains("K")) s.K = d["K"].get<int>();
        if (d.contains("q")) s.q = d["q"].get<int>();
        if (d.contains("r")) s.r = d["r"].get<int>();
        if (d.contains("s")) s.s = d["s"].get<int>();
        if (d.contains("noise_y_sd")) s.noise_y_sd = d["noise_y_sd"].get<double>();
        if (d.contains("shift_scale")) s.shift_scale = d["shift_scale"].get<double>();
        if (d.contains("nonlinear_coeff")) s.nonlinear_coeff = d["nonlinear_coeff"].get<double>();
        if (d.contains("misspecified")) s.misspecified = d["misspecified"].get<bool>();
        if (d.contains("seed")) s.seed = d["seed"].get<std::uint64_t>();
    } else if (spec.kind == "csv") {
        for (auto it = d.cbegin(); it != d.cend(); ++it) {
            if (!csv_keys.count(it.key())) throw SchemaError("config.data: unknown key '" + it.key() + "'");
        }
        CsvSpec& c = spec.csv;
        c.path = d.at("path").get<std::string>();
        c.targets = d.at("targets").get<std::vector<std::string>>();
        if (d.contains("target_positive")) c.target_positive = d["target_positive"].get<std::string>();
        c.sensitive = d.at("sensitive").get<std::string>();
        if (d.contains("sensitive_positive")) c.sensitive_positive = d["sensitive_positive"].get<std::string>();
        if (d.contains("sensitive_less_than")) c.sensitive_less_than = d["sensitive_less_than"].get<double>();
        if (d.contains("categoricals")) c.categoricals = d["categoricals"].get<std::vector<std::string>>();
        if (d.contains("drop")) c.drop = d["drop"].get<std::vector<std::string>>();
        if (d.contains("split_column")) {
            c.split_column = d["split_column"].get<std::string>();
            spec.has_split_column = !c.split_column.empty();
        }
        if (d.contains("keep_sensitive_feature")) c.keep_sensitive_feature = d["keep_sensitive_feature"].get<bool>();
    } else {
        throw SchemaError("config.data: kind must be synth or csv");
    }
    return spec;
}

Json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path);
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw SchemaError(std::string("config parse failure: ") + e.what());
    }
    return j;
}

Dataset materialize(const DataSpec& spec, const RunConfig& cfg) {
    Dataset data;
    if (spec.kind == "synth") {
        SynthConfig s = spec.synth;
        data = s.misspecified ? gen_misspecified_dgp(s) : gen_linear_dgp(s);
    } else {
        data = load_csv(spec.csv);
    }
    if (data.split.empty()) {
        split_dataset(data, cfg.split_fractions, cfg.seed);
    }
    standardize_train(data);
    return data;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path);
    out << content;
}

std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int cmd_simulate(const Json& config_json, const std::string& out_dir) {
    const DataSpec spec = parse_data_spec(config_json);
    if (spec.kind != "synth") throw InputError("simulate needs a synth data section");
    SynthConfig s = spec.synth;
    const Dataset data = s.misspecified ? gen_misspecified_dgp(s) : gen_linear_dgp(s);

    fs::create_directories(out_dir);
    std::ostringstream csv;
    for (Index j = 0; j < data.p(); ++j) csv << (j ? "," : "") << data.feature_names[static_cast<std::size_t>(j)];
    for (Index k = 0; k < data.Y.cols(); ++k) csv << ",y" << k + 1;
    csv << ",z\n";
    for (Index i = 0; i < data.n(); ++i) {
        for (Index j = 0; j < data.p(); ++j) csv << (j ? "," : "") << format17(data.X(i, j));
        for (Index k = 0; k < data.Y.cols(); ++k) csv << "," << format17(data.Y(i, k));
        csv << "," << data.Z[static_cast<std::size_t>(i)] << "\n";
    }
    write_text(out_dir + "/dataset.csv", csv.str());

    Json truth;
    truth["config"] = config_json;
    truth["dataset_digest"] = hex64(data.digest());
    truth["exp_clamp_count"] = data.exp_clamp_count;
    truth["version"] = kVersion;
    const auto mat_json = [](const Matrix& m) {
        Json rows = Json::array();
        for (Index i = 0; i < m.rows(); ++i) {
            Json row = Json::array();
            for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    truth["A_Y"] = mat_json(data.truth->A_Y);
    truth["A_Z"] = mat_json(data.truth->A_Z);
    truth["theta"] = mat_json(data.truth->theta);
    write_report(truth, out_dir + "/truth.json");
    std::cout << "wrote " << out_dir << "/dataset.csv (" << data.n() << " x " << data.p()
              << "), truth.json\n";
    return kExitOk;
}

int cmd_sweep(const Json& config_json, const RunConfig& cfg, const std::string& out_dir) {
    const DataSpec spec = parse_data_spec(config_json);
    Dataset data = materialize(spec, cfg);

    const bool y_discrete = data.y_onehot;
    const ModelKind kind = cfg.model;
    FairProjectionFamily family = estimate_family(
        data.x_rows(Split::Train), data.y_rows(Split::Train), data.z_rows(Split::Train),
        cfg.decomposition, y_discrete, cfg.threads);
    SweepResult result = sweep(family, data, kind, cfg);
    const int m_star = select(result.report, cfg.rule);

    fs::create_directories(out_dir);
    Json report = sweep_report_to_json(result, family, cfg, data);
    report["provenance"]["data"] = config_json.contains("data") ? config_json["data"] : Json();
    write_report(report, out_dir + "/report.json");
    write_text(out_dir + "/tradeoff.tsv", tradeoff_table(result));

    std::cout << "selected m = " << m_star << " of s = " << family.s()
              << (result.report.fallback_used ? " (fallback)" : "") << "\n";
    return result.report.fallback_used ? kExitFlagged : kExitOk;
}

int cmd_influence(const Json& config_json, const RunConfig& cfg, const std::string& out_dir,
                  bool quick) {
    Json out;
    out["version"] = kVersion;
    out["config_digest"] = hex64(json_digest(cfg.to_json()));
    out["seed"] = cfg.seed;

    // mean-functional smoke check: the difference is exact
    {
        const Matrix X = [] {
            Rng rng(17);
            Matrix m(40, 3);
            for (Index i = 0; i < m.rows(); ++i) {
                for (Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
            }
            return m;
        }();
        const auto mean_fn = [&X](const Vector& w) -> Matrix { return X.transpose() * w / w.sum(); };
        double worst = 0.0;
        for (Index i = 0; i < X.rows(); ++i) {
            const Matrix fd = gateaux_fd(mean_fn, X.rows(), i, 1e-5);
            const Vector expected = X.row(i).transpose() - X.colwise().mean().transpose();
            worst = std::max(worst, (fd - expected).cwiseAbs().maxCoeff());
        }
        out["mean_smoke_max_abs_error"] = worst;
    }

    // eigenvector influence vs the end-to-end difference
    {
        SynthConfig s;
        s.n = 300;
        s.p = 6;
        s.q = 4;
        s.r = 4;
        s.s = 2;
        s.K = 2;
        s.seed = cfg.seed;
        const Dataset data = gen_linear_dgp(s);
        const Matrix& X = data.X;
        const auto cov_fn = [&X](const Vector& w) -> Matrix { return weighted_covariance(X, w).mat(); };
        const Vector uniform = Vector::Constant(X.rows(), 1.0 / static_cast<double>(X.rows()));
        const SymMatrix S = weighted_covariance(X, uniform);
        double worst_rel = 0.0;
        for (const int i : {0, 1}) {
            const auto vec_fn = [&X, i](const Vector& w) -> Matrix {
                return sym_eig(weighted_covariance(X, w)).vectors.cols().col(i);
            };
            for (Index pt = 0; pt < X.rows(); pt += 60) {
                const SymMatrix S_star(gateaux_fd(cov_fn, X.rows(), pt, 1e-5));
                const Vector closed = eigvec_if(S, S_star, i, 6);
                const Matrix fd = gateaux_fd(vec_fn, X.rows(), pt, 1e-5);
                worst_rel = std::max(worst_rel, (closed - fd).norm() / std::max(1e-12, fd.norm()));
            }
        }
        out["eigvec_if_max_rel_error"] = worst_rel;
    }

    if (!quick) {
        SynthConfig dgp;
        dgp.seed = cfg.seed;
        McEstimatorSpec est;
        est.m = 2;
        AsymptoticReport rep = mc_normality(dgp, est, {500, 2000}, 200, cfg.seed, cfg.threads);
        out["asymptotics"] = rep.to_json();
    }

    fs::create_directories(out_dir);
    write_report(out, out_dir + "/influence.json");
    std::cout << "influence diagnostics written to " << out_dir << "/influence.json\n";
    return kExitOk;
}

Matrix json_matrix(const Json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) return Matrix(0, 0);
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t k = 0; k < rows[i].size(); ++k) {
            m(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
        }
    }
    return m;
}

int cmd_eval(const std::string& report_path, const Json& config_json, const RunConfig& cfg,
             const std::string& out_dir) {
    const Json report = read_report(report_path);
    if (!report.contains("selected_m") || report["selected_m"].is_null()) {
        throw InputError("eval: report has no selected model");
    }
    const int m_star = report["selected_m"].get<int>();
    if (!report.contains("models")) throw SchemaError("eval: report carries no model parameters");

    const DataSpec spec = parse_data_spec(config_json);
    Dataset data = materialize(spec, cfg);
    const Matrix unshared = json_matrix(report["family"]["unshared"]);
    const Matrix shared = json_matrix(report["family"]["shared"]);
    Matrix P = Matrix::Zero(data.p(), data.p());
    if (unshared.cols() > 0) P += unshared * unshared.transpose();
    if (m_star > 0) P += shared.leftCols(m_star) * shared.leftCols(m_star).transpose();

    const Matrix X_test = data.x_rows(Split::Test) * P;
    const Matrix Y_test = data.y_rows(Split::Test);
    const std::vector<int> z_test = data.z_rows(Split::Test);

    Json out;
    out["selected_m"] = m_star;
    out["dataset_digest"] = hex64(data.digest());
    out["source_report_digest"] = report.contains("provenance") ? report["provenance"]["config_digest"] : Json();
    out["version"] = kVersion;

    const std::string kind = report["models"]["kind"].get<std::string>();
    Matrix scores;
    Matrix base_scores;
    if (kind == "linear") {
        LinearModel model;
        model.theta = json_matrix(report["models"]["selected"]["theta"]);
        model.intercept = json_matrix(report["models"]["selected"]["intercept"]).col(0);
        LinearModel base;
        base.theta = json_matrix(report["models"]["baseline"]["theta"]);
        base.intercept = json_matrix(report["models"]["baseline"]["intercept"]).col(0);
        scores = predict(model, X_test);
        base_scores = predict(base, data.x_rows(Split::Test));
        const UtilityMetrics um = utility_metrics(scores, Y_test, z_test);
        out["rmse"] = um.rmse;
        if (um.rmse_gap) out["rmse_gap"] = *um.rmse_gap;
    } else {
        SoftmaxModel model;
        model.weights = json_matrix(report["models"]["selected"]["weights"]);
        model.classes = static_cast<int>(model.weights.cols());
        SoftmaxModel base;
        base.weights = json_matrix(report["models"]["baseline"]["weights"]);
        base.classes = static_cast<int>(base.weights.cols());
        scores = predict(model, X_test);
        base_scores = predict(base, data.x_rows(Split::Test));
        const UtilityMetrics um = utility_metrics(scores, Y_test, z_test);
        out["accuracy"] = um.accuracy;
        std::vector<int> labels(static_cast<std::size_t>(Y_test.rows()));
        for (Index i = 0; i < Y_test.rows(); ++i) {
            Index arg = 0;
            Y_test.row(i).maxCoeff(&arg);
            labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
        }
        GroupedPredictions gp{scores, labels, z_test};
        GroupedPredictions gp_base{base_scores, labels, z_test};
        out["dp"] = dp_gap(gp);
        out["mcdp"] = mcdp(gp);
        out["baseline_dp"] = dp_gap(gp_base);
        try {
            out["tpr"] = tpr_gap(gp).value;
        } catch (const MetricError&) {
            out["tpr"] = nullptr;
        }
    }
    out["dcov2"] = dcov2(scores, z_test, cfg.dcov_cap, cfg.seed);

    fs::create_directories(out_dir);
    write_report(out, out_dir + "/eval.json");
    std::cout << "test metrics written to " << out_dir << "/eval.json\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sequential fair projection pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::string report_path;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    int threads = 1;
    int m_step = 0;
    double tau = 0.0;
    std::string metric;
    bool quick = false;

    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed_override, "seed override")->each([&](const std::string&) { seed_set = true; });
    app.add_option("--threads", threads, "worker threads");
    app.add_option("--m-step", m_step, "sweep stride over the shared dimensions");
    app.add_option("--tau", tau, "utility floor fraction");
    app.add_option("--metric", metric, "selection metric: dp|tpr|mcdp|dcov");

    CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    CLI::App* swp = app.add_subcommand("sweep", "estimate projections, fit and select models");
    CLI::App* inf = app.add_subcommand("influence", "influence-function diagnostics");
    inf->add_flag("--quick", quick, "skip the Monte Carlo scaling study");
    CLI::App* evl = app.add_subcommand("eval", "re-evaluate a selected model on the test split");
    evl->add_option("--report", report_path, "sweep report to evaluate")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (config_path.empty()) throw InputError("--config is required");
        Json config_json = load_config(config_path);

        // flags override file values; the merged config is echoed into outputs
        if (seed_set) {
            config_json["seed"] = seed_override;
            if (config_json.contains("data") && config_json["data"].contains("seed")) {
                config_json["data"]["seed"] = seed_override;
            }
        }
        if (threads > 0) config_json["threads"] = threads;
        if (m_step > 0) config_json["m_step"] = m_step;
        if (tau > 0) config_json["tau"] = tau;
        if (!metric.empty()) config_json["selection_metric"] = metric;

        Json run_cfg_json = config_json;
        run_cfg_json.erase("data");
        const RunConfig cfg = RunConfig::from_json(run_cfg_json);
        set_default_threads(cfg.threads);
        if (config_json.contains("data") && seed_set) {
            config_json["data"]["seed"] = seed_override;
        }

        if (*sim) return cmd_simulate(config_json, out_dir);
        if (*swp) return cmd_sweep(config_json, cfg, out_dir);
        if (*inf) return cmd_influence(config_json, cfg, out_dir, quick);
        if (*evl) return cmd_eval(report_path, config_json, cfg, out_dir);
        throw InputError("no subcommand");
    } catch (const SchemaError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const MetricError& e) {
        std::cerr << "metric error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConditioningError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
