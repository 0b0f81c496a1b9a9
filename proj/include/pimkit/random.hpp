#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pimkit {

/// SplitMix64 finalizer; derives independent 64-bit seeds for sub-streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// mt19937_64 with hand-rolled variates, so a given seed produces the same
/// numbers on every standard library (std::*_distribution is not portable).
///
/// Sub-stream k of seed s is seeded with splitmix64(s ^ splitmix64(k)).
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : engine_(splitmix64(seed ^ splitmix64(stream))) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Exponential with the given rate.
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    /// Poisson by counting unit-rate arrivals in [0, mean].
    std::uint64_t poisson(double mean) {
        std::uint64_t n = 0;
        double t = exponential(1.0);
        while (t <= mean) {
            ++n;
            t += exponential(1.0);
        }
        return n;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace pimkit
