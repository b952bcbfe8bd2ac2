#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sfp/linalg.hpp"

namespace sfp {

struct SynthConfig {
    Index n = 5000;
    int p = 10;
    int K = 5;
    int q = 8;
    int r = 8;
    int s = 6;
    double noise_y_sd = 0.5;
    double shift_scale = 0.5;
    double nonlinear_coeff = 1.0; // only used by the misspecified generator
    bool misspecified = false;
    std::uint64_t seed = 0;
    // when set, the structural draws (direction blocks, coefficients) come
    // from this seed so replicated samples share one population
    std::uint64_t structure_seed = 0;

    void validate() const;
    std::uint64_t effective_structure_seed() const {
        return structure_seed != 0 ? structure_seed : seed;
    }
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

struct DatasetTruth {
    Matrix A_Y;  // p x q, orthonormal columns
    Matrix A_Z;  // p x r, shares the last s columns of A_Y
    Matrix theta; // p x K
};

struct Dataset {
    Matrix X;            // n x p
    Matrix Y;            // n x K (continuous multi-output or one-hot)
    std::vector<int> Z;  // binary
    bool y_onehot = false;
    std::optional<DatasetTruth> truth;
    std::vector<Split> split;          // empty until split_dataset
    Vector feat_mean, feat_sd;         // set by standardize_train
    std::vector<std::string> feature_names;
    std::vector<std::string> target_names;
    Index dropped_rows = 0;
    int exp_clamp_count = 0;           // clamped exponentials in the group shift
    std::vector<std::string> warnings;

    Index n() const { return X.rows(); }
    Index p() const { return X.cols(); }
    std::vector<Index> rows(Split which) const;
    Matrix x_rows(Split which) const;
    Matrix y_rows(Split which) const;
    std::vector<int> z_rows(Split which) const;
    std::uint64_t digest() const;
};

// Linear multi-output regression data with a binary sensitive attribute and a
// nonlinear in-span covariate shift for the positive group, drawn in a fixed
// substream order so runs are byte-reproducible.
Dataset gen_linear_dgp(const SynthConfig& cfg);

/// Same generator with the extra ||x||²/p term in Y and the group score.
Dataset gen_misspecified_dgp(const SynthConfig& cfg);

struct CsvSpec {
    std::string path;
    std::vector<std::string> targets;        // one categorical label column, or
                                             // several numeric columns
    std::string target_positive;             // binary label mapped to class 1
    std::string sensitive;
    std::string sensitive_positive;          // string equality rule, or
    std::optional<double> sensitive_less_than; // numeric threshold rule
    std::vector<std::string> categoricals;
    std::vector<std::string> drop;
    std::string split_column;                // optional train/val/test tags
    bool keep_sensitive_feature = false;
};

// RFC-4180-style reader: header row, quoted fields, one-hot encoding of all
// declared categorical levels (sorted), rows with missing values ("" or "?")
// dropped and counted.
Dataset load_csv(const CsvSpec& spec);

/// Seeded uniform shuffle then contiguous cut.
void split_dataset(Dataset& data, std::array<double, 3> fractions, std::uint64_t seed);

/// Z-scores every feature using train-split statistics.
void standardize_train(Dataset& data);

/// FNV-1a over a byte range.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

} // namespace sfp
