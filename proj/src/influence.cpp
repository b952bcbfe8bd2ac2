#include "sfp/influence.hpp"

#include <algorithm>
#include <cmath>

#include "sfp/parallel.hpp"
#include "sfp/rng.hpp"

namespace sfp {

Matrix gateaux_fd(const WeightedFunctional& functional, Index n, Index point, double eps) {
    if (eps <= 0) throw InputError("gateaux_fd: eps must be positive");
    if (point < 0 || point >= n) throw InputError("gateaux_fd: point out of range");
    Vector w_plus = Vector::Constant(n, (1.0 - eps) / static_cast<double>(n));
    Vector w_minus = Vector::Constant(n, (1.0 + eps) / static_cast<double>(n));
    w_plus(point) += eps;
    w_minus(point) -= eps;
    const Matrix r_plus = functional(w_plus);
    const Matrix r_minus = functional(w_minus);
    return (r_plus - r_minus) / (2.0 * eps);
}

Vector eigvec_if(const SymMatrix& M, const SymMatrix& M_star, int i, int k_total) {
    if (M.dim() != M_star.dim()) throw DimensionError("eigvec_if: dimension mismatch");
    if (k_total < 1 || k_total > M.dim()) throw DimensionError("eigvec_if: k_total out of range");
    if (i < 0 || i >= k_total) throw DimensionError("eigvec_if: index out of range");
    const EigenPairs ep = sym_eig(M);
    std::string offenders;
    for (int j = 0; j < k_total; ++j) {
        if (j == i) continue;
        if (std::abs(ep.values(i) - ep.values(j)) <= 1e-8) {
            offenders += (offenders.empty() ? "" : ",") + std::to_string(j);
        }
    }
    if (!offenders.empty()) {
        throw DegenerateSpectrumError("eigvec_if: eigenvalue gap below 1e-8 at indices {" +
                                      std::to_string(i) + "} vs {" + offenders + "}");
    }
    const Matrix& V = ep.vectors.cols();
    const Vector Mv = M_star.mat() * V.col(i);
    Vector out = Vector::Zero(M.dim());
    for (int j = 0; j < k_total; ++j) {
        if (j == i) continue;
        out += V.col(j) * (V.col(j).dot(Mv) / (ep.values(i) - ep.values(j)));
    }
    return out;
}

SymMatrix cross_if(const SymMatrix& M_Y, const SymMatrix& Sigma, const SymMatrix& M_Z,
                   const SymMatrix& M_Y_star, const SymMatrix& Sigma_star,
                   const SymMatrix& M_Z_star) {
    const Matrix out = M_Y_star.mat() * Sigma.mat() * M_Z.mat() +
                       M_Y.mat() * Sigma_star.mat() * M_Z.mat() +
                       M_Y.mat() * Sigma.mat() * M_Z_star.mat();
    return SymMatrix(out);
}

SymMatrix projection_if(const ProjectionIfInputs& in) {
    const Index p = in.M_Y.dim();
    if (in.m < 0 || in.m > in.s_block) throw DimensionError("projection_if: m out of range");
    const int full = static_cast<int>(p);

    const EigenPairs ep_z = sym_eig(in.M_Z);
    const EigenPairs ep_y = sym_eig(in.M_Y);
    const Matrix& Psi = ep_z.vectors.cols();
    const Matrix& Beta = ep_y.vectors.cols();

    Matrix Qz = Matrix::Identity(p, p);
    for (int j = 0; j < in.r_block; ++j) Qz -= Psi.col(j) * Psi.col(j).transpose();

    // Perturbation sums run over the whole spectrum: restricting them to the
    // leading block would keep every eigenvector derivative inside its own
    // span, where the symmetric pair sums cancel and Q_z* collapses to zero.
    Matrix Qz_star = Matrix::Zero(p, p);
    for (int j = 0; j < in.r_block; ++j) {
        const Vector psi_star = eigvec_if(in.M_Z, in.M_Z_star, j, full);
        Qz_star -= psi_star * Psi.col(j).transpose() + Psi.col(j) * psi_star.transpose();
    }

    Matrix out = Matrix::Zero(p, p);
    for (int k = 0; k < in.q_block; ++k) {
        const Vector beta_star = eigvec_if(in.M_Y, in.M_Y_star, k, full);
        const Vector b = Qz * Beta.col(k);
        const Vector b_star = Qz * beta_star + Qz_star * Beta.col(k);
        out += b_star * b.transpose() + b * b_star.transpose();
    }
    if (in.m > 0) {
        const EigenPairs ep_c = sym_eig(in.M_YZ);
        const Matrix& Phi = ep_c.vectors.cols();
        for (int i = 0; i < in.m; ++i) {
            const Vector phi_star = eigvec_if(in.M_YZ, in.M_YZ_star, i, full);
            out += phi_star * Phi.col(i).transpose() + Phi.col(i) * phi_star.transpose();
        }
    }
    return SymMatrix(out);
}

// ---------------------------------------------------------------------------

FamilyFunctional::FamilyFunctional(const Matrix& X, const Matrix& Y, const std::vector<int>& Z,
                                   SdrMethod method, int H, double ridge, int r_block,
                                   int s_block, int d_block, std::uint64_t seed, bool y_discrete)
    : X_(X), method_(method), ridge_(ridge), r_block_(r_block), s_block_(s_block),
      d_block_(d_block) {
    if (static_cast<Index>(Z.size()) != X.rows() || Y.rows() != X.rows()) {
        throw DimensionError("FamilyFunctional: row mismatch");
    }
    if (y_discrete) {
        Ylab_.resize(Y.rows(), 1);
        for (Index i = 0; i < Y.rows(); ++i) {
            Index arg = 0;
            Y.row(i).maxCoeff(&arg);
            Ylab_(i, 0) = static_cast<double>(arg);
        }
        y_part_ = ResponsePartition::fit(Ylab_, 0, SliceStrategy::Category);
    } else if (Y.cols() == 1) {
        Ylab_ = Y;
        y_part_ = ResponsePartition::fit(Ylab_, H, SliceStrategy::Quantile);
    } else {
        Ylab_ = Y;
        y_part_ = ResponsePartition::fit(Ylab_, H, SliceStrategy::KMeans, seed);
    }
    Zlab_.resize(X.rows(), 1);
    for (Index i = 0; i < X.rows(); ++i) Zlab_(i, 0) = static_cast<double>(Z[static_cast<std::size_t>(i)]);
    z_part_ = ResponsePartition::fit(Zlab_, 0, SliceStrategy::Category);
}

SymMatrix FamilyFunctional::candidate_y(const Vector& w) const {
    return candidate_matrix_weighted(method_, X_, y_part_.assign(Ylab_), w, ridge_);
}

SymMatrix FamilyFunctional::candidate_z(const Vector& w) const {
    return candidate_matrix_weighted(method_, X_, z_part_.assign(Zlab_), w, ridge_);
}

SymMatrix FamilyFunctional::covariance_fn(const Vector& w) const {
    return weighted_covariance(X_, w);
}

SymMatrix FamilyFunctional::cross(const Vector& w) const {
    return SymMatrix(candidate_y(w).mat() * covariance_fn(w).mat() * candidate_z(w).mat());
}

Matrix FamilyFunctional::projection(const Vector& w, int m) const {
    if (m < 0 || m > s_block_) throw DimensionError("FamilyFunctional: m out of range");
    const Index p = X_.cols();
    const SymMatrix MZ = candidate_z(w);
    const EigenPairs ep_z = sym_eig(MZ);
    const Matrix& Vz = ep_z.vectors.cols();
    const Matrix G = Vz.rightCols(p - r_block_); // orthonormal basis of span(Q_z)

    // unshared block: weighted candidate on the reduced coordinates
    Matrix B;
    if (d_block_ > 0 && G.cols() > 0) {
        const Matrix Xr = X_ * G;
        const SymMatrix Mr = candidate_matrix_weighted(method_, Xr, y_part_.assign(Ylab_), w, ridge_);
        const EigenPairs ep_r = sym_eig(Mr);
        const int d = std::min<int>(d_block_, static_cast<int>(G.cols()));
        B = orthonormalize_ordered(G * ep_r.vectors.cols().leftCols(d)).cols();
    } else {
        B = Matrix::Zero(p, 0);
    }

    Matrix P = B * B.transpose();
    if (m > 0) {
        const SymMatrix MYZ = cross(w);
        const EigenPairs ep_c = gen_eig(MYZ, covariance_fn(w), ridge_);
        Matrix Phi = orthonormalize_ordered(ep_c.vectors.cols().leftCols(s_block_)).cols();
        if (B.cols() > 0) {
            Phi = orthonormalize_ordered(Phi - B * (B.transpose() * Phi)).cols();
        }
        const int mm = std::min<int>(m, static_cast<int>(Phi.cols()));
        P += Phi.leftCols(mm) * Phi.leftCols(mm).transpose();
    }
    return P;
}

SymMatrix FamilyFunctional::projection_if_at(Index point, int m, double eps) const {
    const Index n = X_.rows();
    const auto my = [this](const Vector& w) { return candidate_y(w).mat(); };
    const auto mz = [this](const Vector& w) { return candidate_z(w).mat(); };
    const auto cov = [this](const Vector& w) { return covariance_fn(w).mat(); };
    const Vector uniform = Vector::Constant(n, 1.0 / static_cast<double>(n));

    const SymMatrix M_Y = candidate_y(uniform);
    const SymMatrix M_Z = candidate_z(uniform);
    const SymMatrix Sigma = covariance_fn(uniform);
    const SymMatrix M_Y_star(gateaux_fd(my, n, point, eps));
    const SymMatrix M_Z_star(gateaux_fd(mz, n, point, eps));
    const SymMatrix Sigma_star(gateaux_fd(cov, n, point, eps));
    const SymMatrix M_YZ = cross_candidate(M_Y, Sigma, M_Z);
    const SymMatrix M_YZ_star = cross_if(M_Y, Sigma, M_Z, M_Y_star, Sigma_star, M_Z_star);

    ProjectionIfInputs in{M_Y, M_Z, M_YZ, M_Y_star, M_Z_star, M_YZ_star,
                          d_block_ + s_block_, r_block_, s_block_, m};
    return projection_if(in);
}

SymMatrix FamilyFunctional::projection_fd_at(Index point, int m, double eps) const {
    const auto fn = [this, m](const Vector& w) { return projection(w, m); };
    return SymMatrix(gateaux_fd(fn, X_.rows(), point, eps));
}

// ---------------------------------------------------------------------------

namespace {

Vector pack_linear(const LinearModel& model) {
    const Index p = model.theta.rows();
    const Index K = model.theta.cols();
    Vector out(p * K + K);
    out.head(p * K) = Eigen::Map<const Vector>(model.theta.data(), p * K);
    out.tail(K) = model.intercept;
    return out;
}

} // namespace

LinearThetaInfluence::LinearThetaInfluence(const Matrix& X, const Matrix& Y, const Matrix& P,
                                           double fd_step)
    : X_(X), Y_(Y), P_(P), XP_(X * P), fd_step_(fd_step) {
    model_ = fit_linear(XP_, Y_).first;
    const Index n = X_.rows();
    const Index p = X_.cols();
    const Index K = Y_.cols();
    const Index dim = p * K + K;

    Matrix H = Matrix::Zero(dim, dim);
    for (Index i = 0; i < n; ++i) {
        const GradHess gh = linear_loss_grad_hess(model_, XP_.row(i).transpose(), Y_.row(i).transpose());
        H += gh.hess;
    }
    H /= static_cast<double>(n);
    H.diagonal().array() += 1e-10 * H.trace() / static_cast<double>(dim) + 1e-300;
    Hinv_ = H.ldlt().solve(Matrix::Identity(dim, dim));
}

Vector LinearThetaInfluence::base_term(Index i) const {
    const GradHess gh = linear_loss_grad_hess(model_, XP_.row(i).transpose(), Y_.row(i).transpose());
    return -(Hinv_ * gh.grad);
}

namespace {

// nearest projector of the given rank: spectral truncation. Perturbed
// projectors acquire O(h²) spurious eigendirections whose regression
// coefficients blow up like 1/h; retracting onto the manifold keeps the
// refit smooth.
Matrix retract_projector(const Matrix& P, Index rank) {
    const EigenPairs ep = sym_eig(SymMatrix(P));
    const Matrix top = ep.vectors.cols().leftCols(rank);
    return top * top.transpose();
}

} // namespace

Vector LinearThetaInfluence::evaluate(Index i, const Matrix& P_star) const {
    const double scale = P_star.norm();
    if (scale < 1e-14) return base_term(i);
    const Index rank = static_cast<Index>(std::lround(P_.trace()));
    const Matrix direction = P_star / scale;
    const Matrix Pp = retract_projector(P_ + fd_step_ * direction, rank);
    const Matrix Pm = retract_projector(P_ - fd_step_ * direction, rank);
    const Vector tp = pack_linear(fit_linear(X_ * Pp, Y_).first);
    const Vector tm = pack_linear(fit_linear(X_ * Pm, Y_).first);
    return base_term(i) + scale * (tp - tm) / (2.0 * fd_step_);
}

// ---------------------------------------------------------------------------

double dagostino_k2_pvalue(const std::vector<double>& sample) {
    const double n = static_cast<double>(sample.size());
    if (sample.size() < 20) throw InputError("dagostino_k2_pvalue: need at least 20 samples");
    double mean = 0.0;
    for (double v : sample) mean += v;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : sample) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (m2 <= 0) return 1.0;

    const double g1 = m3 / std::pow(m2, 1.5);
    const double Y = g1 * std::sqrt((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0)));
    const double beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0) /
                         ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    const double W2 = -1.0 + std::sqrt(2.0 * (beta2 - 1.0));
    const double delta = 1.0 / std::sqrt(std::log(std::sqrt(W2)));
    const double alpha = std::sqrt(2.0 / (W2 - 1.0));
    const double Z1 = delta * std::log(Y / alpha + std::sqrt((Y / alpha) * (Y / alpha) + 1.0));

    const double g2 = m4 / (m2 * m2);
    const double Eg2 = 3.0 * (n - 1.0) / (n + 1.0);
    const double Vg2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    const double x = (g2 - Eg2) / std::sqrt(Vg2);
    const double sb1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0)) *
                       std::sqrt(6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0)));
    const double A = 6.0 + 8.0 / sb1 * (2.0 / sb1 + std::sqrt(1.0 + 4.0 / (sb1 * sb1)));
    const double inner = (1.0 - 2.0 / A) / (1.0 + x * std::sqrt(2.0 / (A - 4.0)));
    const double Z2 = ((1.0 - 2.0 / (9.0 * A)) - std::cbrt(inner)) / std::sqrt(2.0 / (9.0 * A));

    const double K2 = Z1 * Z1 + Z2 * Z2;
    return std::exp(-K2 / 2.0);
}

Json AsymptoticReport::to_json() const {
    Json j;
    j["functional"] = functional;
    Json ns = Json::array();
    for (Index n : n_list) ns.push_back(static_cast<std::int64_t>(n));
    j["n_list"] = ns;
    const auto vec_json = [](const Vector& v) {
        Json arr = Json::array();
        for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
        return arr;
    };
    Json sds = Json::array();
    for (const Vector& v : sd_per_n) sds.push_back(vec_json(v));
    j["sd_per_n"] = sds;
    Json ratios = Json::array();
    for (const Vector& v : scaling_ratios) ratios.push_back(vec_json(v));
    j["scaling_ratios"] = ratios;
    Json pvals = Json::array();
    for (const Vector& v : normality_pvalues) pvals.push_back(vec_json(v));
    j["normality_pvalues"] = pvals;
    j["plugin_sd"] = vec_json(plugin_sd);
    j["theta_ref"] = vec_json(theta_ref);
    return j;
}

namespace {

// full-sample estimator used in the Monte Carlo study: standardize, estimate
// the family at fixed ranks, fit OLS on P^(m) X, return the weight matrix
Vector mc_estimator(const Dataset& raw, const McEstimatorSpec& spec, std::uint64_t kmeans_seed) {
    Matrix X = raw.X;
    const Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::RowVectorXd sd = ((X.rowwise() - mean).array().square().colwise().sum() /
                             static_cast<double>(X.rows() - 1)).sqrt();
    for (Index j = 0; j < sd.size(); ++j) {
        if (sd(j) < 1e-12) sd(j) = 1.0;
    }
    X = (X.rowwise() - mean).array().rowwise() / sd.array();

    FamilyFunctional fam(X, raw.Y, raw.Z, SdrMethod::SAVE, static_cast<int>(X.cols()) + 1,
                         kDefaultRidge, spec.r_block, spec.s_block, spec.d_block, kmeans_seed);
    const Vector uniform = Vector::Constant(X.rows(), 1.0 / static_cast<double>(X.rows()));
    const Matrix P = fam.projection(uniform, spec.m);
    const LinearModel model = fit_linear(X * P, raw.Y).first;
    return Eigen::Map<const Vector>(model.theta.data(), model.theta.size());
}

} // namespace

AsymptoticReport mc_normality(const SynthConfig& dgp, const McEstimatorSpec& estimator,
                              const std::vector<Index>& n_list, int replications,
                              std::uint64_t seed, int threads) {
    if (replications < 100) throw InputError("mc_normality: need at least 100 replications");
    AsymptoticReport report;
    report.functional = "linear_theta_m" + std::to_string(estimator.m);
    report.n_list = n_list;

    Index n_max = 0;
    for (Index n : n_list) n_max = std::max(n_max, n);

    // one fixed population across every replicate; only the samples vary
    const std::uint64_t structure = mix64(seed) ^ 0x737472756374ULL;
    const std::uint64_t slicing = mix64(seed) ^ 0x736c696365ULL;

    {
        SynthConfig ref = dgp;
        ref.n = 10 * n_max;
        ref.structure_seed = structure;
        ref.seed = mix64(seed) ^ 0x7265666572ULL;
        const Dataset data = ref.misspecified ? gen_misspecified_dgp(ref) : gen_linear_dgp(ref);
        report.theta_ref = mc_estimator(data, estimator, slicing);
    }

    for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
        const Index n = n_list[ni];
        std::vector<Vector> thetas(static_cast<std::size_t>(replications));
        parallel_for(replications, [&](int rep) {
            SynthConfig cfg = dgp;
            cfg.n = n;
            cfg.structure_seed = structure;
            cfg.seed = mix64(seed + 1000 * static_cast<std::uint64_t>(ni)) ^
                       mix64(static_cast<std::uint64_t>(rep) + 1);
            const Dataset data = cfg.misspecified ? gen_misspecified_dgp(cfg) : gen_linear_dgp(cfg);
            thetas[static_cast<std::size_t>(rep)] = mc_estimator(data, estimator, slicing);
        }, threads);

        const Index dim = thetas[0].size();
        Vector mean = Vector::Zero(dim);
        for (const Vector& t : thetas) mean += t;
        mean /= static_cast<double>(replications);
        Vector var = Vector::Zero(dim);
        for (const Vector& t : thetas) var += (t - mean).cwiseProduct(t - mean);
        var /= static_cast<double>(replications - 1);
        report.sd_per_n.push_back(var.cwiseSqrt());

        Vector pvals(dim);
        for (Index c = 0; c < dim; ++c) {
            std::vector<double> coord(static_cast<std::size_t>(replications));
            for (int rep = 0; rep < replications; ++rep) {
                coord[static_cast<std::size_t>(rep)] = thetas[static_cast<std::size_t>(rep)](c);
            }
            pvals(c) = dagostino_k2_pvalue(coord);
        }
        report.normality_pvalues.push_back(pvals);
    }
    for (std::size_t ni = 0; ni + 1 < n_list.size(); ++ni) {
        report.scaling_ratios.push_back(
            report.sd_per_n[ni].cwiseQuotient(report.sd_per_n[ni + 1]));
    }

    if (estimator.with_plugin) {
        SynthConfig cfg = dgp;
        cfg.n = n_max;
        cfg.structure_seed = structure;
        cfg.seed = mix64(seed) ^ 0x706c7567696eULL;
        const Dataset data = cfg.misspecified ? gen_misspecified_dgp(cfg) : gen_linear_dgp(cfg);
        Matrix X = data.X;
        const Eigen::RowVectorXd mean = X.colwise().mean();
        Eigen::RowVectorXd sd = ((X.rowwise() - mean).array().square().colwise().sum() /
                                 static_cast<double>(X.rows() - 1)).sqrt();
        for (Index j = 0; j < sd.size(); ++j) {
            if (sd(j) < 1e-12) sd(j) = 1.0;
        }
        X = (X.rowwise() - mean).array().rowwise() / sd.array();
        FamilyFunctional fam(X, data.Y, data.Z, SdrMethod::SAVE, static_cast<int>(X.cols()) + 1,
                             kDefaultRidge, estimator.r_block, estimator.s_block,
                             estimator.d_block, cfg.seed);
        const Vector uniform = Vector::Constant(X.rows(), 1.0 / static_cast<double>(X.rows()));
        const Matrix P = fam.projection(uniform, estimator.m);
        LinearThetaInfluence theta_if(X, data.Y, P);

        const Index n = X.rows();
        const Index pk = data.Y.cols() * X.cols();
        std::vector<Vector> ifs(static_cast<std::size_t>(n));
        parallel_for(static_cast<int>(n), [&](int i) {
            // influence of the projector actually estimated by the pipeline
            const SymMatrix p_star = fam.projection_fd_at(i, estimator.m);
            ifs[static_cast<std::size_t>(i)] = theta_if.evaluate(i, p_star.mat()).head(pk);
        }, threads);
        Vector m0 = Vector::Zero(pk);
        for (const Vector& v : ifs) m0 += v;
        m0 /= static_cast<double>(n);
        Vector var = Vector::Zero(pk);
        for (const Vector& v : ifs) var += (v - m0).cwiseProduct(v - m0);
        var /= static_cast<double>(n - 1);
        report.plugin_sd = (var / static_cast<double>(n)).cwiseSqrt();
    }
    return report;
}

} // namespace sfp
