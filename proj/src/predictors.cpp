#include "sfp/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace sfp {

namespace {

constexpr double kLinearRidgeRel = 1e-10;

std::pair<LinearModel, FitReport> solve_linear(const Matrix& X, const Matrix& Y, const Vector& w) {
    if (X.rows() == 0) throw InputError("fit_linear: empty sample");
    if (X.rows() != Y.rows()) throw DimensionError("fit_linear: X/Y row mismatch");
    const Index p = X.cols();
    const double total = w.sum();
    const Vector mu = X.transpose() * w / total;
    const Vector my = Y.transpose() * w / total;
    const Matrix Xc = X.rowwise() - mu.transpose();
    const Matrix Yc = Y.rowwise() - my.transpose();
    Matrix G = Xc.transpose() * w.asDiagonal() * Xc;
    double lam = kLinearRidgeRel * G.trace() / static_cast<double>(p);
    if (!(lam > 0)) lam = 1e-12; // all-zero features: intercept-only fit
    G.diagonal().array() += lam;
    LinearModel model;
    model.theta = G.ldlt().solve(Xc.transpose() * (w.asDiagonal() * Yc));
    model.intercept = my - model.theta.transpose() * mu;

    FitReport report;
    report.iterations = 1;
    const Matrix resid = Yc - Xc * model.theta;
    report.objective = 0.5 * resid.rowwise().squaredNorm().dot(w) / total;
    report.grad_norm = (Xc.transpose() * (w.asDiagonal() * resid)).cwiseAbs().maxCoeff() / total;
    report.converged = true;
    return {std::move(model), std::move(report)};
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix probs(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        probs.row(i) = e / e.sum();
    }
    return probs;
}

struct SoftmaxProblem {
    const Matrix& Xa; // n x (p+1), last column = 1
    const std::vector<int>& labels;
    const Vector& w;  // normalized weights
    int K;
    double l2;
    Index p;

    double objective(const Matrix& W) const {
        const Matrix logits = Xa * W;
        double nll = 0.0;
        for (Index i = 0; i < Xa.rows(); ++i) {
            const double m = logits.row(i).maxCoeff();
            const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
            nll += w(i) * (lse - logits(i, labels[static_cast<std::size_t>(i)]));
        }
        return nll + 0.5 * l2 * W.topRows(p).squaredNorm();
    }

    // gradient over the free block (columns 0..K-2), flattened column-major
    Vector gradient(const Matrix& W, Matrix* probs_out = nullptr) const {
        const Matrix probs = softmax_rows(Xa * W);
        Matrix resid = probs;
        for (Index i = 0; i < Xa.rows(); ++i) resid(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
        resid.array().colwise() *= w.array();
        Matrix g = Xa.transpose() * resid.leftCols(K - 1);
        g.topRows(p) += l2 * W.topRows(p).leftCols(K - 1);
        if (probs_out) *probs_out = probs;
        return Eigen::Map<const Vector>(g.data(), g.size());
    }

    Matrix hessian(const Matrix& probs) const {
        const Index d = Xa.cols();
        const int Kf = K - 1;
        Matrix H = Matrix::Zero(d * Kf, d * Kf);
        for (Index i = 0; i < Xa.rows(); ++i) {
            const Matrix xxt = w(i) * (Xa.row(i).transpose() * Xa.row(i));
            for (int a = 0; a < Kf; ++a) {
                const double pa = probs(i, a);
                for (int b = a; b < Kf; ++b) {
                    const double s = pa * ((a == b ? 1.0 : 0.0) - probs(i, b));
                    if (s == 0.0) continue;
                    H.block(a * d, b * d, d, d) += s * xxt;
                }
            }
        }
        for (int a = 0; a < Kf; ++a) {
            for (int b = a + 1; b < Kf; ++b) {
                H.block(b * d, a * d, d, d) = H.block(a * d, b * d, d, d);
            }
        }
        for (int a = 0; a < Kf; ++a) {
            for (Index j = 0; j < p; ++j) H(a * d + j, a * d + j) += l2;
        }
        return H;
    }
};

std::pair<SoftmaxModel, FitReport> solve_softmax(const Matrix& X, const std::vector<int>& labels,
                                                 const Vector& w, const SoftmaxOptions& options) {
    const Index n = X.rows();
    if (static_cast<Index>(labels.size()) != n) throw DimensionError("fit_softmax: label count mismatch");
    std::set<int> present(labels.begin(), labels.end());
    if (present.size() < 2) throw InputError("fit_softmax: need at least two classes present");
    const int K = *std::max_element(labels.begin(), labels.end()) + 1;
    const Index p = X.cols();

    Matrix Xa(n, p + 1);
    Xa.leftCols(p) = X;
    Xa.col(p).setOnes();
    const Vector wn = w / w.sum();
    SoftmaxProblem prob{Xa, labels, wn, K, options.l2, p};

    Matrix W = Matrix::Zero(p + 1, K);
    FitReport report;
    double obj = prob.objective(W);
    report.objective_history.push_back(obj);

    for (int iter = 0; iter < options.max_iter; ++iter) {
        Matrix probs;
        const Vector g = prob.gradient(W, &probs);
        report.grad_norm = g.cwiseAbs().maxCoeff();
        report.iterations = iter;
        if (report.grad_norm <= options.tol) {
            report.converged = true;
            break;
        }
        Matrix H = prob.hessian(probs);
        H.diagonal().array() += 1e-12; // keep the pinned-class reduced system SPD
        const Vector step = H.ldlt().solve(g);
        double scale = 1.0;
        bool accepted = false;
        for (int half = 0; half < 30; ++half) {
            Matrix Wtry = W;
            Eigen::Map<Matrix> free_block(Wtry.data(), p + 1, K - 1);
            free_block -= scale * Eigen::Map<const Matrix>(step.data(), p + 1, K - 1);
            const double try_obj = prob.objective(Wtry);
            if (try_obj <= obj + 1e-14 * std::abs(obj)) {
                W = std::move(Wtry);
                obj = try_obj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        report.objective_history.push_back(obj);
        if (!accepted) {
            report.warnings.push_back("line search stalled");
            break;
        }
    }
    report.objective = obj;
    if (!report.converged) {
        const Vector g = prob.gradient(W);
        report.grad_norm = g.cwiseAbs().maxCoeff();
        report.converged = report.grad_norm <= options.tol;
        if (!report.converged) {
            report.warnings.push_back("did not reach gradient tolerance");
        }
    }
    if (options.l2 == 0.0) {
        // a vanishing unpenalized objective means saturated probabilities:
        // the optimum is at infinity and the gradient test is vacuous
        const Matrix probs = softmax_rows(Xa * W);
        double worst = 0.0;
        for (Index i = 0; i < n; ++i) {
            worst = std::max(worst, 1.0 - probs(i, labels[static_cast<std::size_t>(i)]));
        }
        if (worst < 1e-6) {
            report.converged = false;
            report.warnings.push_back("perfect separation: the unpenalized optimum is unbounded");
        }
    }
    SoftmaxModel model;
    model.weights = std::move(W);
    model.classes = K;
    return {std::move(model), std::move(report)};
}

} // namespace

std::pair<LinearModel, FitReport> fit_linear(const Matrix& X, const Matrix& Y) {
    return solve_linear(X, Y, Vector::Ones(X.rows()));
}

std::pair<LinearModel, FitReport> fit_linear_weighted(const Matrix& X, const Matrix& Y,
                                                      const Vector& w) {
    if (w.size() != X.rows()) throw DimensionError("fit_linear_weighted: weight length mismatch");
    return solve_linear(X, Y, w);
}

std::pair<SoftmaxModel, FitReport> fit_softmax(const Matrix& X, const std::vector<int>& labels,
                                               const SoftmaxOptions& options) {
    return solve_softmax(X, labels, Vector::Ones(X.rows()), options);
}

std::pair<SoftmaxModel, FitReport> fit_softmax_weighted(const Matrix& X,
                                                        const std::vector<int>& labels,
                                                        const Vector& w,
                                                        const SoftmaxOptions& options) {
    if (w.size() != X.rows()) throw DimensionError("fit_softmax_weighted: weight length mismatch");
    return solve_softmax(X, labels, w, options);
}

Matrix predict(const LinearModel& model, const Matrix& X) {
    return (X * model.theta).rowwise() + model.intercept.transpose();
}

Matrix predict(const SoftmaxModel& model, const Matrix& X) {
    Matrix Xa(X.rows(), X.cols() + 1);
    Xa.leftCols(X.cols()) = X;
    Xa.col(X.cols()).setOnes();
    return softmax_rows(Xa * model.weights);
}

GradHess linear_loss_grad_hess(const LinearModel& model, const Vector& x, const Vector& y) {
    const Index p = model.theta.rows();
    const Index K = model.theta.cols();
    const Vector err = model.theta.transpose() * x + model.intercept - y;
    GradHess out;
    out.grad.resize(p * K + K);
    for (Index k = 0; k < K; ++k) out.grad.segment(k * p, p) = err(k) * x;
    out.grad.tail(K) = err;
    out.hess = Matrix::Zero(p * K + K, p * K + K);
    const Matrix xxt = x * x.transpose();
    for (Index k = 0; k < K; ++k) {
        out.hess.block(k * p, k * p, p, p) = xxt;
        out.hess.block(k * p, p * K + k, p, 1) = x;
        out.hess.block(p * K + k, k * p, 1, p) = x.transpose();
        out.hess(p * K + k, p * K + k) = 1.0;
    }
    return out;
}

GradHess softmax_loss_grad_hess(const SoftmaxModel& model, const Vector& x, int label,
                                double l2) {
    const Index p = model.weights.rows() - 1;
    const int K = model.classes;
    const int Kf = K - 1;
    Vector xa(p + 1);
    xa.head(p) = x;
    xa(p) = 1.0;
    Vector logits = model.weights.transpose() * xa;
    const double m = logits.maxCoeff();
    Vector probs = (logits.array() - m).exp();
    probs /= probs.sum();

    GradHess out;
    const Index d = p + 1;
    out.grad.resize(d * Kf);
    for (int c = 0; c < Kf; ++c) {
        const double r = probs(c) - (label == c ? 1.0 : 0.0);
        out.grad.segment(c * d, d) = r * xa;
        out.grad.segment(c * d, p) += l2 * model.weights.col(c).head(p);
    }
    out.hess = Matrix::Zero(d * Kf, d * Kf);
    const Matrix xxt = xa * xa.transpose();
    for (int a = 0; a < Kf; ++a) {
        for (int b = 0; b < Kf; ++b) {
            const double s = probs(a) * ((a == b ? 1.0 : 0.0) - probs(b));
            out.hess.block(a * d, b * d, d, d) = s * xxt;
        }
        for (Index j = 0; j < p; ++j) out.hess(a * d + j, a * d + j) += l2;
    }
    return out;
}

UtilityMetrics utility_metrics(const Matrix& predictions, const Matrix& truth,
                               const std::vector<int>& z) {
    const Index n = predictions.rows();
    if (truth.rows() != n || static_cast<Index>(z.size()) != n) {
        throw DimensionError("utility_metrics: row mismatch");
    }
    UtilityMetrics out;
    double sq = 0.0, sq0 = 0.0, sq1 = 0.0;
    Index n0 = 0, n1 = 0;
    Index hits = 0, hits0 = 0, hits1 = 0;
    for (Index i = 0; i < n; ++i) {
        const double row_sq = (predictions.row(i) - truth.row(i)).squaredNorm();
        Index pred_arg = 0, true_arg = 0;
        predictions.row(i).maxCoeff(&pred_arg);
        truth.row(i).maxCoeff(&true_arg);
        const bool hit = pred_arg == true_arg;
        sq += row_sq;
        hits += hit;
        if (z[static_cast<std::size_t>(i)] == 0) {
            sq0 += row_sq;
            hits0 += hit;
            ++n0;
        } else {
            sq1 += row_sq;
            hits1 += hit;
            ++n1;
        }
    }
    const double K = static_cast<double>(predictions.cols());
    out.rmse = std::sqrt(sq / (static_cast<double>(n) * K));
    out.accuracy = 100.0 * static_cast<double>(hits) / static_cast<double>(n);
    if (n0 > 0) {
        out.rmse_group0 = std::sqrt(sq0 / (static_cast<double>(n0) * K));
        out.accuracy_group0 = 100.0 * static_cast<double>(hits0) / static_cast<double>(n0);
    }
    if (n1 > 0) {
        out.rmse_group1 = std::sqrt(sq1 / (static_cast<double>(n1) * K));
        out.accuracy_group1 = 100.0 * static_cast<double>(hits1) / static_cast<double>(n1);
    }
    if (n0 > 0 && n1 > 0) out.rmse_gap = std::abs(out.rmse_group1 - out.rmse_group0);
    return out;
}

} // namespace sfp
