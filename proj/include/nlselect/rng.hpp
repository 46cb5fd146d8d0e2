#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "nlselect/errors.hpp"

namespace nlselect {

/* Deterministic random numbers.
 *
 * The engine is mt19937_64 (bit-exact by the standard) and every
 * distribution transform below is written out by hand, so a given seed
 * produces the same stream on any platform or standard library.  All
 * experiment code derives child seeds through derive_seed instead of
 * sharing one generator, which keeps repetitions independent of loop
 * order and thread count.
 */

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Mix a root seed with up to three stream labels into a child seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = seed;
    std::uint64_t h = splitmix64(s);
    s ^= a * 0xA24BAED4963EE407ULL;
    h ^= splitmix64(s);
    s ^= b * 0x9FB21C651E98DF25ULL;
    h ^= splitmix64(s);
    s ^= c * 0xD6E8FEB86659FD93ULL;
    h ^= splitmix64(s);
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_below(std::uint64_t n) {
        // rejection keeps the draw unbiased
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    /// Standard normal via Box-Muller; the spare is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Gamma(shape, scale) via Marsaglia-Tsang squeeze.
    double gamma(double shape, double scale) {
        if (!(shape > 0.0) || !(scale > 0.0)) {
            throw NonPositiveScale("gamma requires positive shape and scale");
        }
        if (shape < 1.0) {
            const double boost = std::pow(uniform_positive(), 1.0 / shape);
            return gamma(shape + 1.0, scale) * boost;
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_positive();
            if (u < 1.0 - 0.0331 * x * x * x * x) {
                return d * v * scale;
            }
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
                return d * v * scale;
            }
        }
    }

    double chi_squared(double dof) { return gamma(0.5 * dof, 2.0); }

    /// Noncentral chi-squared: one shifted normal plus a central remainder.
    double noncentral_chi_squared(double dof, double lambda) {
        if (dof < 1.0) {
            throw NonPositiveScale("noncentral chi-squared requires dof >= 1");
        }
        const double z = normal() + std::sqrt(lambda);
        double value = z * z;
        if (dof > 1.0) {
            value += chi_squared(dof - 1.0);
        }
        return value;
    }

private:
    double uniform_positive() {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return u;
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace nlselect
