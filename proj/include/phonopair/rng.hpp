// Seeded random sampling: every consumer takes an explicit Rng, no globals.
// Per-trial streams are derived from (base seed, trial index) so results do
// not depend on worker count or execution order.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace phonopair {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Deterministic stream seed for a given trial (or resample) index.
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
    uint64_t s = base ^ (0x9E3779B97F4A7C15ull * (index + 1));
    return splitmix64(s);
}

/// xoshiro256** seeded through splitmix64.
class Rng {
  public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    /// Exponential with the given mean.
    double exponential(double mean) { return -mean * std::log1p(-uniform()); }

    /// Standard normal (Box-Muller, one value per call for determinism).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    int poisson(double mean) {
        if (mean <= 0) return 0;
        if (mean < 50.0) {  // Knuth multiplication
            const double l = std::exp(-mean);
            int k = 0;
            double p = 1.0;
            do {
                ++k;
                p *= uniform();
            } while (p > l);
            return k - 1;
        }
        const int k = static_cast<int>(std::lround(mean + std::sqrt(mean) * normal()));
        return k < 0 ? 0 : k;
    }

    /// Bose-Einstein (single-mode thermal) occupation with mean nbar.
    int bose(double nbar) {
        if (nbar <= 0) return 0;
        const double q = nbar / (1.0 + nbar);
        double u = uniform();
        while (u <= 0) u = uniform();
        return static_cast<int>(std::floor(std::log(u) / std::log(q)));
    }

    /// Geometric over {0,1,2,...} with P(n) = (1-lambda) lambda^n.
    int geometric(double lambda) {
        if (lambda <= 0) return 0;
        double u = uniform();
        while (u <= 0) u = uniform();
        return static_cast<int>(std::floor(std::log(u) / std::log(lambda)));
    }

    int binomial(int n, double p) {
        int k = 0;
        for (int i = 0; i < n; ++i) k += bernoulli(p);
        return k;
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4]{};
};

}  // namespace phonopair
