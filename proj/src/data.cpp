#include "sfp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "sfp/rng.hpp"

namespace sfp {

void SynthConfig::validate() const {
    if (n < 2) throw InputError("SynthConfig: n must be >= 2");
    if (p < 1 || K < 1 || q < 1 || r < 1 || s < 0) throw InputError("SynthConfig: non-positive dimension");
    if (s > std::min(q, r)) throw InputError("SynthConfig: s must be <= min(q, r)");
    if (p < q + r - s) throw InputError("SynthConfig: p must be >= q + r - s");
}

std::vector<Index> Dataset::rows(Split which) const {
    if (split.size() != static_cast<std::size_t>(n())) throw InputError("Dataset: no split tags");
    std::vector<Index> out;
    for (Index i = 0; i < n(); ++i) {
        if (split[static_cast<std::size_t>(i)] == which) out.push_back(i);
    }
    return out;
}

namespace {

Matrix gather(const Matrix& M, const std::vector<Index>& idx) {
    Matrix out(static_cast<Index>(idx.size()), M.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = M.row(idx[i]);
    return out;
}

} // namespace

Matrix Dataset::x_rows(Split which) const { return gather(X, rows(which)); }
Matrix Dataset::y_rows(Split which) const { return gather(Y, rows(which)); }

std::vector<int> Dataset::z_rows(Split which) const {
    std::vector<int> out;
    for (Index i : rows(which)) out.push_back(Z[static_cast<std::size_t>(i)]);
    return out;
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t Dataset::digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const Index dims[4] = {X.rows(), X.cols(), Y.cols(), static_cast<Index>(y_onehot)};
    h = fnv1a(dims, sizeof(dims), h);
    h = fnv1a(X.data(), sizeof(double) * static_cast<std::size_t>(X.size()), h);
    h = fnv1a(Y.data(), sizeof(double) * static_cast<std::size_t>(Y.size()), h);
    h = fnv1a(Z.data(), sizeof(int) * Z.size(), h);
    return h;
}

namespace {

// Substream ids for the generator; the draw order below is part of the
// reproducibility contract.
enum : std::uint64_t { kStreamA = 1, kStreamX = 2, kStreamTheta = 3, kStreamNoiseY = 4, kStreamNoiseZ = 5 };

Matrix random_orthonormal(Index p, Index k, Rng& rng) {
    Matrix G(p, k);
    for (Index j = 0; j < k; ++j) {
        for (Index i = 0; i < p; ++i) G(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ() * Matrix::Identity(p, k);
    const Matrix R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (Index j = 0; j < k; ++j) {
        if (R(j, j) < 0) Q.col(j) = -Q.col(j);
    }
    return Q;
}

Dataset generate(const SynthConfig& cfg) {
    cfg.validate();
    const Index n = cfg.n;
    const Index p = cfg.p;
    const Index K = cfg.K;
    const Index q = cfg.q;
    const Index r = cfg.r;
    const Index s = cfg.s;

    Rng rng_a = Rng::stream(cfg.effective_structure_seed(), kStreamA);
    const Matrix A = random_orthonormal(p, q + r - s, rng_a);
    const Matrix A_Y = A.leftCols(q);
    const Matrix A_Z = A.middleCols(q - s, r);

    Rng rng_x = Rng::stream(cfg.seed, kStreamX);
    Matrix X(n, p);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) X(i, j) = rng_x.normal();
    }

    Rng rng_t = Rng::stream(cfg.effective_structure_seed(), kStreamTheta);
    Matrix theta(p, K);
    for (Index i = 0; i < p; ++i) {
        for (Index k = 0; k < K; ++k) theta(i, k) = 1.0 + rng_t.normal();
    }

    Rng rng_ey = Rng::stream(cfg.seed, kStreamNoiseY);
    Matrix Y = X * (A_Y * (A_Y.transpose() * theta));
    for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < K; ++k) Y(i, k) += cfg.noise_y_sd * rng_ey.normal();
    }
    Vector sq_over_p(n);
    for (Index i = 0; i < n; ++i) sq_over_p(i) = X.row(i).squaredNorm() / static_cast<double>(p);
    if (cfg.nonlinear_coeff != 0.0) {
        Y.colwise() += cfg.nonlinear_coeff * sq_over_p;
    }

    Rng rng_ez = Rng::stream(cfg.seed, kStreamNoiseZ);
    const Matrix C = X * A_Z; // projection coefficients onto the sensitive span
    const Matrix U_Z = C * A_Z.transpose();
    std::vector<int> Zv(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i) {
        double xi = U_Z.row(i).array().tanh().sum() / static_cast<double>(p);
        // centered so the group stays a minority under the added curvature
        if (cfg.nonlinear_coeff != 0.0) xi += cfg.nonlinear_coeff * (sq_over_p(i) - 1.0);
        xi += rng_ez.normal();
        Zv[static_cast<std::size_t>(i)] = xi >= 1.0 ? 1 : 0;
    }

    int clamped = 0;
    if (cfg.shift_scale != 0.0) {
        // group shift confined to the sensitive span: x += scale * A_Z exp(A_Zᵀ x)
        for (Index i = 0; i < n; ++i) {
            if (Zv[static_cast<std::size_t>(i)] != 1) continue;
            Vector e(r);
            for (Index j = 0; j < r; ++j) {
                double v = std::exp(C(i, j));
                if (v > 1e6) {
                    v = 1e6;
                    ++clamped;
                }
                e(j) = v;
            }
            X.row(i) += cfg.shift_scale * (A_Z * e).transpose();
        }
    }

    Dataset data;
    data.X = std::move(X);
    data.Y = std::move(Y);
    data.Z = std::move(Zv);
    data.truth = DatasetTruth{A_Y, A_Z, theta};
    data.exp_clamp_count = clamped;
    data.feature_names.reserve(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) data.feature_names.push_back("x" + std::to_string(j + 1));
    for (Index k = 0; k < K; ++k) data.target_names.push_back("y" + std::to_string(k + 1));
    return data;
}

} // namespace

Dataset gen_linear_dgp(const SynthConfig& cfg) {
    SynthConfig c = cfg;
    c.nonlinear_coeff = 0.0;
    c.misspecified = false;
    return generate(c);
}

Dataset gen_misspecified_dgp(const SynthConfig& cfg) {
    if (!cfg.misspecified) throw InputError("gen_misspecified_dgp: misspecified flag not set");
    return generate(cfg);
}

void split_dataset(Dataset& data, std::array<double, 3> fractions, std::uint64_t seed) {
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9) throw InputError("split: fractions must sum to 1");
    const Index n = data.n();
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    Rng rng = Rng::stream(seed, 0x73706c6974ULL);
    for (Index i = n - 1; i > 0; --i) {
        const Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    const Index n_train = static_cast<Index>(std::floor(fractions[0] * static_cast<double>(n)));
    const Index n_val = static_cast<Index>(std::floor(fractions[1] * static_cast<double>(n)));
    data.split.assign(static_cast<std::size_t>(n), Split::Test);
    for (Index k = 0; k < n_train; ++k) data.split[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] = Split::Train;
    for (Index k = n_train; k < n_train + n_val; ++k) data.split[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] = Split::Val;

    for (Split which : {Split::Val, Split::Test}) {
        const auto z = data.z_rows(which);
        const bool has0 = std::find(z.begin(), z.end(), 0) != z.end();
        const bool has1 = std::find(z.begin(), z.end(), 1) != z.end();
        if (!has0 || !has1) {
            data.warnings.push_back("split leaves a sensitive group empty in val or test");
        }
    }
}

void standardize_train(Dataset& data) {
    const std::vector<Index> train = data.rows(Split::Train);
    if (train.size() < 2) throw InputError("standardize: need at least two training rows");
    const Index p = data.p();
    Vector mean = Vector::Zero(p);
    for (Index i : train) mean += data.X.row(i).transpose();
    mean /= static_cast<double>(train.size());
    Vector var = Vector::Zero(p);
    for (Index i : train) {
        const Vector d = data.X.row(i).transpose() - mean;
        var += d.cwiseProduct(d);
    }
    var /= static_cast<double>(train.size() - 1);
    Vector sd = var.cwiseSqrt();
    for (Index j = 0; j < p; ++j) {
        if (sd(j) < 1e-12) sd(j) = 1.0;
    }
    data.X = (data.X.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
    data.feat_mean = std::move(mean);
    data.feat_sd = std::move(sd);
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& s) { return s.empty() || s == "?"; }

double parse_number(const std::string& s, std::size_t line_no, const std::string& col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw InputError("csv line " + std::to_string(line_no) + ": cannot parse '" + s +
                         "' in column " + col);
    }
}

} // namespace

Dataset load_csv(const CsvSpec& spec) {
    std::ifstream in(spec.path);
    if (!in) throw InputError("load_csv: cannot open " + spec.path);
    std::string line;
    if (!std::getline(in, line)) throw InputError("load_csv: empty file");
    const std::vector<std::string> header_raw = parse_csv_line(line);
    std::vector<std::string> header;
    header.reserve(header_raw.size());
    for (const auto& h : header_raw) header.push_back(trim(h));

    std::map<std::string, std::size_t> col_of;
    for (std::size_t j = 0; j < header.size(); ++j) col_of[header[j]] = j;
    const auto need = [&](const std::string& name) {
        const auto it = col_of.find(name);
        if (it == col_of.end()) throw InputError("load_csv: column '" + name + "' not found");
        return it->second;
    };

    if (spec.targets.empty()) throw InputError("load_csv: no target columns declared");
    std::vector<std::size_t> target_cols;
    for (const auto& t : spec.targets) target_cols.push_back(need(t));
    const std::size_t sensitive_col = need(spec.sensitive);
    std::optional<std::size_t> split_col;
    if (!spec.split_column.empty()) split_col = need(spec.split_column);

    const std::set<std::string> drop(spec.drop.begin(), spec.drop.end());
    const std::set<std::string> categorical(spec.categoricals.begin(), spec.categoricals.end());
    std::vector<std::size_t> feature_cols;
    for (std::size_t j = 0; j < header.size(); ++j) {
        const std::string& name = header[j];
        if (drop.count(name)) continue;
        if (std::find(target_cols.begin(), target_cols.end(), j) != target_cols.end()) continue;
        if (split_col && j == *split_col) continue;
        if (j == sensitive_col && !spec.keep_sensitive_feature) continue;
        feature_cols.push_back(j);
    }

    std::vector<std::vector<std::string>> rows;
    Index dropped = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        std::vector<std::string> fields = parse_csv_line(line);
        if (fields.size() != header.size()) {
            throw InputError("csv line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        }
        for (auto& f : fields) f = trim(f);
        bool missing = false;
        for (const auto& f : fields) {
            if (is_missing(f)) {
                missing = true;
                break;
            }
        }
        if (missing) {
            ++dropped;
            continue;
        }
        rows.push_back(std::move(fields));
    }
    if (rows.empty()) throw InputError("load_csv: no usable rows");
    const Index n = static_cast<Index>(rows.size());

    // collect categorical levels, deterministically sorted
    std::map<std::size_t, std::vector<std::string>> levels;
    for (std::size_t j : feature_cols) {
        if (!categorical.count(header[j])) continue;
        std::set<std::string> values;
        for (const auto& row : rows) values.insert(row[j]);
        levels[j] = std::vector<std::string>(values.begin(), values.end());
    }

    Index width = 0;
    for (std::size_t j : feature_cols) {
        width += categorical.count(header[j]) ? static_cast<Index>(levels[j].size()) : 1;
    }

    Dataset data;
    data.X.resize(n, width);
    data.dropped_rows = dropped;
    {
        Index col = 0;
        for (std::size_t j : feature_cols) {
            if (categorical.count(header[j])) {
                const auto& lv = levels[j];
                for (std::size_t k = 0; k < lv.size(); ++k) {
                    data.feature_names.push_back(header[j] + "=" + lv[k]);
                }
                for (Index i = 0; i < n; ++i) {
                    const std::string& v = rows[static_cast<std::size_t>(i)][j];
                    const auto it = std::lower_bound(lv.begin(), lv.end(), v);
                    for (std::size_t k = 0; k < lv.size(); ++k) data.X(i, col + static_cast<Index>(k)) = 0.0;
                    data.X(i, col + static_cast<Index>(it - lv.begin())) = 1.0;
                }
                col += static_cast<Index>(lv.size());
            } else {
                data.feature_names.push_back(header[j]);
                for (Index i = 0; i < n; ++i) {
                    data.X(i, col) = parse_number(rows[static_cast<std::size_t>(i)][j], i + 2, header[j]);
                }
                ++col;
            }
        }
    }

    // targets: one categorical column becomes one-hot; several numeric columns
    // become a continuous multi-output
    if (spec.targets.size() == 1 && (!spec.target_positive.empty() || true)) {
        const std::size_t tc = target_cols[0];
        bool numeric = spec.target_positive.empty();
        if (numeric) {
            for (const auto& row : rows) {
                try {
                    std::size_t pos = 0;
                    (void)std::stod(row[tc], &pos);
                    if (pos != row[tc].size()) {
                        numeric = false;
                        break;
                    }
                } catch (const std::exception&) {
                    numeric = false;
                    break;
                }
            }
        }
        if (numeric) {
            data.Y.resize(n, 1);
            for (Index i = 0; i < n; ++i) {
                data.Y(i, 0) = parse_number(rows[static_cast<std::size_t>(i)][tc], i + 2, header[tc]);
            }
            data.target_names.push_back(header[tc]);
        } else {
            std::vector<std::string> classes;
            if (!spec.target_positive.empty()) {
                classes = {"other", spec.target_positive};
            } else {
                std::set<std::string> values;
                for (const auto& row : rows) values.insert(row[tc]);
                classes.assign(values.begin(), values.end());
            }
            data.Y = Matrix::Zero(n, static_cast<Index>(classes.size()));
            data.y_onehot = true;
            for (Index i = 0; i < n; ++i) {
                const std::string& v = rows[static_cast<std::size_t>(i)][tc];
                Index k = 0;
                if (!spec.target_positive.empty()) {
                    k = v == spec.target_positive ? 1 : 0;
                } else {
                    k = static_cast<Index>(std::find(classes.begin(), classes.end(), v) - classes.begin());
                }
                data.Y(i, k) = 1.0;
            }
            for (const auto& c : classes) data.target_names.push_back(header[tc] + "=" + c);
        }
    } else {
        data.Y.resize(n, static_cast<Index>(target_cols.size()));
        for (std::size_t t = 0; t < target_cols.size(); ++t) {
            for (Index i = 0; i < n; ++i) {
                data.Y(i, static_cast<Index>(t)) =
                    parse_number(rows[static_cast<std::size_t>(i)][target_cols[t]], i + 2, header[target_cols[t]]);
            }
            data.target_names.push_back(header[target_cols[t]]);
        }
    }

    data.Z.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const std::string& v = rows[static_cast<std::size_t>(i)][sensitive_col];
        int z;
        if (!spec.sensitive_positive.empty()) {
            z = v == spec.sensitive_positive ? 1 : 0;
        } else if (spec.sensitive_less_than) {
            z = parse_number(v, i + 2, header[sensitive_col]) < *spec.sensitive_less_than ? 1 : 0;
        } else {
            const double num = parse_number(v, i + 2, header[sensitive_col]);
            if (num != 0.0 && num != 1.0) {
                throw InputError("load_csv: sensitive column is not binary; declare a rule");
            }
            z = static_cast<int>(num);
        }
        data.Z[static_cast<std::size_t>(i)] = z;
    }
    {
        const bool has0 = std::find(data.Z.begin(), data.Z.end(), 0) != data.Z.end();
        const bool has1 = std::find(data.Z.begin(), data.Z.end(), 1) != data.Z.end();
        if (!has0 || !has1) throw InputError("load_csv: sensitive column is not binary after encoding");
    }

    if (split_col) {
        data.split.resize(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
            const std::string& v = rows[static_cast<std::size_t>(i)][*split_col];
            if (v == "train") data.split[static_cast<std::size_t>(i)] = Split::Train;
            else if (v == "val") data.split[static_cast<std::size_t>(i)] = Split::Val;
            else if (v == "test") data.split[static_cast<std::size_t>(i)] = Split::Test;
            else throw InputError("load_csv: unknown split tag '" + v + "'");
        }
    }
    return data;
}

} // namespace sfp
