#pragma once

#include <cstdint>

#include "plmlab/matrix.hpp"

namespace plmlab {

// Counter-based generator (SplitMix64 over seed+counter). The integer
// stream depends only on the seed, never on platform word order or
// library state, so seeded runs are reproducible everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller.
    double next_normal();

    double next_normal(double mean, double stddev) { return mean + stddev * next_normal(); }

    // Uniform integer in [0, bound).
    std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

    Matrix normal_matrix(std::size_t rows, std::size_t cols, double mean, double stddev);

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace plmlab
