#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace surgseg {

// Deterministic random source. std:: distributions are implementation
// defined, so all draws are derived from raw mt19937_64 output here.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    // Derive an independent stream, e.g. per (epoch, sample).
    static Rng derive(uint64_t seed, uint64_t a, uint64_t b = 0) {
        uint64_t h = seed;
        h = splitmix(h ^ (0x9e3779b97f4a7c15ULL + a));
        h = splitmix(h ^ (0xbf58476d1ce4e5b9ULL + b));
        return Rng(h);
    }

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    int64_t uniform_int(int64_t n) {
        return n <= 1 ? 0 : static_cast<int64_t>(uniform() * static_cast<double>(n));
    }

    // Standard normal via Box-Muller; one value per call keeps streams simple.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Truncated normal at +/- 2 sigma, the usual transformer init.
    double trunc_normal(double std_dev) {
        for (;;) {
            double x = normal();
            if (std::abs(x) <= 2.0) return x * std_dev;
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    static uint64_t splitmix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace surgseg
