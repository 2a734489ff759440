#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace lshmf {

// Engines are seeded through std::seed_seq so that independent streams can be
// addressed by (seed, tag...) without correlated outputs. Everything drawn from
// them below uses explicit bit manipulation, so results do not depend on the
// standard library's distribution implementations.
inline std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t a = 0,
                                     std::uint64_t b = 0, std::uint64_t c = 0) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
        static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32),
        static_cast<std::uint32_t>(c),    static_cast<std::uint32_t>(c >> 32)};
    return std::mt19937_64(seq);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). n must be positive.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    // rejection keeps the draw exactly uniform
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return x % n;
}

/// Standard normal via Box-Muller (one value per call).
inline double standard_normal(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) {
        u1 = uniform01(rng);
    }
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace lshmf
