#pragma once

// Deterministic, platform-independent random streams. Every randomized
// procedure in the library derives its draws from (seed, stream index), so
// replications can run in any order or in parallel and still reproduce
// byte-identical results. std::*_distribution is deliberately avoided: its
// output is implementation-defined.

#include <cstdint>

#include "peerscreen/mathx.hpp"

namespace peerscreen {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // Decorrelate trivially related seeds before first use.
        next_u64();
        next_u64();
    }

    /// Independent stream for replication/item `index` under the same seed.
    static Rng stream(std::uint64_t seed, std::uint64_t index) {
        return Rng(seed ^ (0x9e3779b97f4a7c15ULL + index * 0xbf58476d1ce4e5b9ULL));
    }

    // SplitMix64 step.
    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in (0, 1): 53-bit mantissa, zero excluded so inverse-CDF
    /// transforms stay finite.
    double uniform() {
        double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via inverse CDF.
    double normal() { return norm_quantile(uniform()); }

    double normal(double mu, double sd) { return mu + sd * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
};

} // namespace peerscreen
