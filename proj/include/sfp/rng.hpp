#pragma once

#include <cstdint>
#include <random>

namespace sfp {

/// SplitMix64 finalizer, used to derive independent substream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Reproducible RNG: std::mt19937_64 behind a fixed sampling discipline.
//   uniform: (x >> 11) * 2^-53 in [0, 1)
//   normal:  Box-Muller, second value cached
//   below:   rejection sampling, no modulo bias
// Substreams come from stream(seed, id) so parallel consumers are
// schedule-independent.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    static Rng stream(std::uint64_t seed, std::uint64_t id) {
        return Rng(mix64(mix64(seed) ^ mix64(id + 0x51ed2701a9e5f3d7ULL)));
    }

    std::uint64_t next_u64() { return gen_(); }

    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double normal();

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace sfp
