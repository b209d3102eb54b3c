#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace stflow {

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard; the std distributions are not, so
// all derived draws below are computed by hand from raw 64-bit words.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), rejection sampled so there is no modulo bias.
    std::uint64_t below(std::uint64_t n);

    // Standard normal via Box-Muller (one value per call).
    double normal();

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Sub-seed for a named purpose: mix64(seed ^ fnv1a64(purpose)). Every
// component that needs randomness derives its own stream this way from the
// single run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

}  // namespace stflow
