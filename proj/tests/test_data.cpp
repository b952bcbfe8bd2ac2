#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "helpers.hpp"
#include "sfp/data.hpp"
#include "sfp/report.hpp"

using namespace sfp;

namespace {

std::string write_temp_csv(const std::string& name, const std::string& content) {
    const std::string path = std::string(SFP_TEST_TMP) + "/" + name;
    std::ofstream out(path);
    out << content;
    return path;
}

} // namespace

TEST_SUITE("data") {

TEST_CASE("generator shapes and orthonormal truth") {
    SynthConfig cfg;
    cfg.seed = 3;
    const Dataset data = gen_linear_dgp(cfg);
    CHECK(data.X.rows() == 5000);
    CHECK(data.X.cols() == 10);
    CHECK(data.Y.cols() == 5);
    CHECK(data.Z.size() == 5000);
    REQUIRE(data.truth);
    const Matrix& A_Y = data.truth->A_Y;
    CHECK((A_Y.transpose() * A_Y - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-10);

    // the shared block shows up as exactly s unit singular values
    const Eigen::JacobiSVD<Matrix> svd(A_Y.transpose() * data.truth->A_Z);
    int units = 0;
    for (Index i = 0; i < svd.singularValues().size(); ++i) {
        if (std::abs(svd.singularValues()(i) - 1.0) < 1e-10) ++units;
        else CHECK(svd.singularValues()(i) < 1e-10);
    }
    CHECK(units == 6);
}

TEST_CASE("group frequency sits in the expected band") {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SynthConfig cfg;
        cfg.seed = seed;
        const Dataset data = gen_linear_dgp(cfg);
        double rate = 0;
        for (int z : data.Z) rate += z;
        total += rate / static_cast<double>(data.n());
    }
    total /= 10.0;
    CHECK(total > 0.15);
    CHECK(total < 0.20);
}

TEST_CASE("generation is byte-reproducible") {
    SynthConfig cfg;
    cfg.seed = 9;
    const Dataset a = gen_linear_dgp(cfg);
    const Dataset b = gen_linear_dgp(cfg);
    CHECK(std::memcmp(a.X.data(), b.X.data(), sizeof(double) * a.X.size()) == 0);
    CHECK(std::memcmp(a.Y.data(), b.Y.data(), sizeof(double) * a.Y.size()) == 0);
    CHECK(a.Z == b.Z);
    CHECK(a.digest() == b.digest());
}

TEST_CASE("misspecified generator reduces to the linear one at zero coefficient") {
    SynthConfig cfg;
    cfg.seed = 4;
    cfg.misspecified = true;
    cfg.nonlinear_coeff = 0.0;
    const Dataset reduced = gen_misspecified_dgp(cfg);
    SynthConfig base = cfg;
    base.misspecified = false;
    const Dataset lin = gen_linear_dgp(base);
    CHECK(std::memcmp(reduced.X.data(), lin.X.data(), sizeof(double) * lin.X.size()) == 0);
    CHECK(std::memcmp(reduced.Y.data(), lin.Y.data(), sizeof(double) * lin.Y.size()) == 0);
    CHECK(reduced.Z == lin.Z);
    CHECK(reduced.digest() == lin.digest());

    SynthConfig one = cfg;
    one.nonlinear_coeff = 1.0;
    const Dataset mis = gen_misspecified_dgp(one);
    CHECK((mis.Y - lin.Y).cwiseAbs().maxCoeff() > 0.1); // the term really enters
}

TEST_CASE("misspecified scenario keeps the group a minority") {
    SynthConfig cfg;
    cfg.p = 30;
    cfg.q = 30;
    cfg.r = 30;
    cfg.s = 30;
    cfg.misspecified = true;
    cfg.seed = 11;
    const Dataset data = gen_misspecified_dgp(cfg);
    double rate = 0;
    for (int z : data.Z) rate += z;
    rate /= static_cast<double>(data.n());
    CHECK(rate > 0.10);
    CHECK(rate < 0.25);
}

TEST_CASE("target is conditionally independent of the features given the sufficient block") {
    // pre-shift design: regressing Y on the complement of the target span
    // leaves coefficients at the sampling noise floor
    SynthConfig cfg;
    cfg.shift_scale = 0.0;
    cfg.seed = 13;
    const Dataset data = gen_linear_dgp(cfg);
    const Matrix& A_Y = data.truth->A_Y;
    const OrthonormalBasis comp =
        orthonormalize(Matrix::Identity(10, 10) - A_Y * A_Y.transpose());
    REQUIRE(comp.rank() == 2);
    const Matrix W = data.X * comp.cols();
    const Matrix coef = (W.transpose() * W).ldlt().solve(W.transpose() * data.Y);
    for (Index k = 0; k < data.Y.cols(); ++k) {
        const double sd_y = std::sqrt((data.Y.col(k).array() - data.Y.col(k).mean()).square().sum() /
                                      static_cast<double>(data.n() - 1));
        const double se = sd_y / std::sqrt(static_cast<double>(data.n()));
        CHECK(coef.col(k).cwiseAbs().maxCoeff() < 4.0 * se);
    }
}

TEST_CASE("config validation") {
    SynthConfig bad;
    bad.s = 9;
    CHECK_THROWS_AS(gen_linear_dgp(bad), InputError);
    SynthConfig bad2;
    bad2.p = 5;
    CHECK_THROWS_AS(gen_linear_dgp(bad2), InputError);
    SynthConfig not_mis;
    CHECK_THROWS_AS(gen_misspecified_dgp(not_mis), InputError);
}

TEST_CASE("split sizes, determinism, and balance") {
    SynthConfig cfg;
    cfg.n = 100;
    cfg.seed = 21;
    Dataset data = gen_linear_dgp(cfg);
    split_dataset(data, {0.7, 0.1, 0.2}, 5);
    CHECK(data.rows(Split::Train).size() == 70);
    CHECK(data.rows(Split::Val).size() == 10);
    CHECK(data.rows(Split::Test).size() == 20);

    Dataset again = gen_linear_dgp(cfg);
    split_dataset(again, {0.7, 0.1, 0.2}, 5);
    CHECK(data.split == again.split);

    CHECK_THROWS_AS(split_dataset(data, {0.5, 0.1, 0.1}, 5), InputError);

    SynthConfig big;
    big.seed = 22;
    Dataset big_data = gen_linear_dgp(big);
    split_dataset(big_data, {0.7, 0.1, 0.2}, 7);
    double global = 0;
    for (int z : big_data.Z) global += z;
    global /= static_cast<double>(big_data.n());
    for (Split which : {Split::Train, Split::Val, Split::Test}) {
        const auto z = big_data.z_rows(which);
        double rate = 0;
        for (int v : z) rate += v;
        rate /= static_cast<double>(z.size());
        CHECK(std::abs(rate - global) < 0.05);
    }
}

TEST_CASE("split warns when a group is missing from a holdout") {
    SynthConfig cfg;
    cfg.n = 40;
    cfg.q = 4;
    cfg.r = 4;
    cfg.s = 2;
    cfg.p = 6;
    cfg.seed = 3;
    Dataset data = gen_linear_dgp(cfg);
    // force a single positive row: tiny validation splits will miss it
    std::fill(data.Z.begin(), data.Z.end(), 0);
    data.Z[0] = 1;
    split_dataset(data, {0.7, 0.1, 0.2}, 1);
    CHECK_FALSE(data.warnings.empty());
}

TEST_CASE("standardization uses training statistics only") {
    SynthConfig cfg;
    cfg.n = 500;
    cfg.seed = 31;
    Dataset data = gen_linear_dgp(cfg);
    split_dataset(data, {0.7, 0.1, 0.2}, 31);
    standardize_train(data);
    const Matrix train = data.x_rows(Split::Train);
    CHECK(train.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);
    const Index nt = train.rows();
    const Eigen::RowVectorXd sd =
        (train.array().square().colwise().sum() / static_cast<double>(nt - 1)).sqrt();
    CHECK((sd.array() - 1.0).abs().maxCoeff() < 1e-10);
    // val/test are transformed by the same statistics, not re-centered
    const Matrix val = data.x_rows(Split::Val);
    CHECK(val.colwise().mean().cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("csv loader onehots declared categoricals") {
    const std::string path = write_temp_csv("toy.csv",
        "age,color,income,sex\n"
        "30,red,1.5,M\n"
        "40,blue,2.5,F\n"
        "50,red,3.5,M\n");
    CsvSpec spec;
    spec.path = path;
    spec.targets = {"income"};
    spec.sensitive = "sex";
    spec.sensitive_positive = "F";
    spec.categoricals = {"color"};
    const Dataset data = load_csv(spec);
    CHECK(data.X.cols() == 3); // age + 2 color levels
    CHECK(data.feature_names == std::vector<std::string>{"age", "color=blue", "color=red"});
    CHECK(data.X(0, 2) == 1.0);
    CHECK(data.X(1, 1) == 1.0);
    CHECK(data.Z == std::vector<int>{0, 1, 0});
    CHECK(data.Y(1, 0) == doctest::Approx(2.5));
}

TEST_CASE("csv loader drops missing rows and reports parse errors") {
    const std::string path = write_temp_csv("missing.csv",
        "a,b,z\n"
        "1,2,0\n"
        "?,3,1\n"
        "4,,0\n"
        "5,6,1\n");
    CsvSpec spec;
    spec.path = path;
    spec.targets = {"b"};
    spec.sensitive = "z";
    const Dataset data = load_csv(spec);
    CHECK(data.n() == 2);
    CHECK(data.dropped_rows == 2);

    const std::string bad = write_temp_csv("bad.csv",
        "a,b,z\n"
        "1,2,0\n"
        "oops,3,1\n");
    CsvSpec bad_spec;
    bad_spec.path = bad;
    bad_spec.targets = {"b"};
    bad_spec.sensitive = "z";
    CHECK_THROWS_WITH_AS(load_csv(bad_spec),
                         doctest::Contains("line 3"), InputError);
}

TEST_CASE("csv loader enforces a binary sensitive column") {
    const std::string path = write_temp_csv("nonbinary.csv",
        "a,z\n"
        "1,0\n"
        "2,2\n");
    CsvSpec spec;
    spec.path = path;
    spec.targets = {"a"};
    spec.sensitive = "z";
    CHECK_THROWS_AS(load_csv(spec), InputError);
}

TEST_CASE("csv loader binarizes by numeric threshold") {
    const std::string path = write_temp_csv("bankish.csv",
        "age,balance,deposit\n"
        "22,100,yes\n"
        "40,200,no\n"
        "24,300,yes\n");
    CsvSpec spec;
    spec.path = path;
    spec.targets = {"deposit"};
    spec.target_positive = "yes";
    spec.sensitive = "age";
    spec.sensitive_less_than = 25.0;
    const Dataset data = load_csv(spec);
    CHECK(data.Z == std::vector<int>{1, 0, 1});
    CHECK(data.y_onehot);
    CHECK(data.Y(0, 1) == 1.0);
    CHECK(data.Y(1, 0) == 1.0);
    CHECK(data.X.cols() == 1); // age excluded as the sensitive column
}

TEST_CASE("report round trip is canonical") {
    Json j;
    j["alpha"] = 0.1 + 0.2;
    j["beta"] = {{"nested", 1}, {"values", {1.0, 2.5, -3.75}}};
    j["gamma"] = nullptr;
    j["count"] = 42;
    const std::string path = std::string(SFP_TEST_TMP) + "/report.json";
    write_report(j, path);
    const Json back = read_report(path);
    CHECK(back["alpha"].get<double>() == 0.1 + 0.2);
    CHECK(back["count"].get<int>() == 42);
    write_report(back, path + "2");
    std::ifstream f1(path), f2(path + "2");
    const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
}

TEST_CASE("report schema version is enforced") {
    const std::string path = std::string(SFP_TEST_TMP) + "/badschema.json";
    {
        std::ofstream out(path);
        out << "{\"schema_version\": 99}\n";
    }
    CHECK_THROWS_AS(read_report(path), SchemaError);
    const std::string path2 = std::string(SFP_TEST_TMP) + "/noschema.json";
    {
        std::ofstream out(path2);
        out << "{}\n";
    }
    CHECK_THROWS_AS(read_report(path2), SchemaError);
}

} // TEST_SUITE
