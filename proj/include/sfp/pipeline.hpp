#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sfp/data.hpp"
#include "sfp/decomposition.hpp"
#include "sfp/fairness.hpp"
#include "sfp/predictors.hpp"
#include "sfp/report.hpp"

namespace sfp {

enum class FairnessMetric { DP, TPR, MCDP, DCov };
enum class ModelKind { Linear, Softmax };

std::string to_string(FairnessMetric m);
FairnessMetric fairness_metric_from(const std::string& name);

struct SelectionRule {
    double tau = 0.95;
    FairnessMetric metric = FairnessMetric::MCDP;
    enum class Fallback { Full, BestUtility } fallback = Fallback::Full;
};

struct TradeoffPoint {
    int m = 0; // -1 marks the unprojected baseline
    double utility = 0.0;
    bool utility_is_rmse = false;
    double dp = 0.0;
    std::optional<double> tpr; // missing for regression or empty cells
    double mcdp = 0.0;
    double dcov2 = 0.0;
    double param_distance = 0.0;
    double wd = 0.0; // per-dimension group Wasserstein distance, averaged
    int rank = 0;

    Json to_json() const;
};

struct SweepReport {
    std::vector<TradeoffPoint> points; // validation metrics, ordered by m
    TradeoffPoint baseline;            // model on unprojected features
    std::optional<int> selected_m;
    SelectionRule rule;
    bool fallback_used = false;
    std::vector<std::string> flags;
};

struct RunConfig {
    DecompositionConfig decomposition;
    ModelKind model = ModelKind::Linear;
    SoftmaxOptions softmax;
    SelectionRule rule;
    int m_step = 1;
    Index dcov_cap = 2000;
    std::uint64_t seed = 0;
    int threads = 1;
    std::array<double, 3> split_fractions{0.7, 0.1, 0.2};

    static RunConfig from_json(const Json& j); // unknown keys rejected
    Json to_json() const;
};

// One fitted model per projection level plus the baseline; kept so points can
// be re-evaluated on other splits.
struct SweepResult {
    SweepReport report;                 // validation metrics + selection
    std::vector<TradeoffPoint> points_test;
    std::vector<int> m_values;
    std::vector<LinearModel> linear_models;
    std::vector<SoftmaxModel> softmax_models;
    LinearModel baseline_linear;
    SoftmaxModel baseline_softmax;
    ModelKind kind = ModelKind::Linear;
};

// Fits the baseline on raw features and one model per retained m on P^(m) X
// (training split), evaluating every metric on the validation split and, for
// the trade-off table, on the test split.
SweepResult sweep(const FairProjectionFamily& family, const Dataset& data, ModelKind kind,
                  const RunConfig& config);

// Among points with utility above tau * baseline (RMSE: below baseline/tau),
// picks the smallest fairness metric, ties broken by smaller m; empty feasible
// set falls back per the rule and sets a flag. Returns the selected m.
int select(SweepReport& report, const SelectionRule& rule);

/// Re-evaluates one swept model on a given split.
TradeoffPoint evaluate_point(const SweepResult& result, const FairProjectionFamily& family,
                             const Dataset& data, int m, Split split, const RunConfig& config);

/// Re-evaluates the selected model on the untouched test split.
TradeoffPoint evaluate_test(const SweepResult& result, const FairProjectionFamily& family,
                            const Dataset& data, const RunConfig& config);

Json sweep_report_to_json(const SweepResult& result, const FairProjectionFamily& family,
                          const RunConfig& config, const Dataset& data);

/// Tab-separated trade-off table: m utility dp tpr mcdp dcov2 param_distance wd.
std::string tradeoff_table(const SweepResult& result);

} // namespace sfp
