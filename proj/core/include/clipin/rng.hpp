#pragma once

#include <cstdint>
#include <vector>

namespace clipin {

// xoshiro256++ seeded through splitmix64. Self-contained so that streams are
// bit-identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double uniform();

    // Uniform integer in [0, n), n >= 1. Rejection sampling, no modulo bias.
    std::uint64_t uniform_int(std::uint64_t n);

    // Standard normal via Box-Muller; the spare value is cached.
    double normal();

    // Distinct indices drawn from [0, n), in draw order (partial Fisher-Yates).
    std::vector<int> sample_without_replacement(int n, int k);

    // Independent deterministic stream identified by (seed, stream, step).
    static Rng derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t step);

private:
    std::uint64_t state_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace clipin
