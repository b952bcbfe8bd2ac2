#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sfp/linalg.hpp"

namespace sfp {

struct LinearModel {
    Matrix theta;     // p x K
    Vector intercept; // K
};

struct SoftmaxModel {
    // (p + 1) x K: row p is the intercept, last class column pinned to zero.
    Matrix weights;
    int classes = 0;
};

struct FitReport {
    int iterations = 0;
    double objective = 0.0;
    double grad_norm = 0.0;
    bool converged = false;
    std::vector<double> objective_history;
    std::vector<std::string> warnings;
};

// Least squares via normal equations with relative ridge
// 1e-10 * tr(XcᵀXc)/p; the intercept is always included and unpenalized.
std::pair<LinearModel, FitReport> fit_linear(const Matrix& X, const Matrix& Y);
std::pair<LinearModel, FitReport> fit_linear_weighted(const Matrix& X, const Matrix& Y,
                                                      const Vector& w);

struct SoftmaxOptions {
    double l2 = 1e-4;   // applied to weights only, per mean-loss objective
    double tol = 1e-8;  // gradient infinity norm
    int max_iter = 100;
};

// Multinomial cross-entropy minimized by Newton steps with step halving;
// deterministic zero initialization, reference class pinned.
std::pair<SoftmaxModel, FitReport> fit_softmax(const Matrix& X, const std::vector<int>& labels,
                                               const SoftmaxOptions& options = {});
std::pair<SoftmaxModel, FitReport> fit_softmax_weighted(const Matrix& X,
                                                        const std::vector<int>& labels,
                                                        const Vector& w,
                                                        const SoftmaxOptions& options = {});

Matrix predict(const LinearModel& model, const Matrix& X);
/// Row-stochastic class probabilities.
Matrix predict(const SoftmaxModel& model, const Matrix& X);

// Per-sample loss derivatives over the packed parameter vector.
// Linear: params = [vec(theta) ; intercept], loss = 0.5 ||y - pred||².
// Softmax: params = vec of the (p+1) x (K-1) free block, loss =
// -log p_y + (l2/2)||weights||².
struct GradHess {
    Vector grad;
    Matrix hess;
};
GradHess linear_loss_grad_hess(const LinearModel& model, const Vector& x, const Vector& y);
GradHess softmax_loss_grad_hess(const SoftmaxModel& model, const Vector& x, int label,
                                double l2);

struct UtilityMetrics {
    double rmse = 0.0;
    double rmse_group0 = 0.0;
    double rmse_group1 = 0.0;
    std::optional<double> rmse_gap; // missing when a group is empty
    double accuracy = 0.0;          // percent, argmax vs argmax
    double accuracy_group0 = 0.0;
    double accuracy_group1 = 0.0;
};

UtilityMetrics utility_metrics(const Matrix& predictions, const Matrix& truth,
                               const std::vector<int>& z);

} // namespace sfp
