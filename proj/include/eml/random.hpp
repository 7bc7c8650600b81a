#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace eml {

using Rng = std::mt19937_64;

/// splitmix64 finaliser; derives independent child seeds from (seed, tag).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Uniform integer in [0, n) by rejection; identical across standard libraries.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    std::uint64_t r;
    do { r = rng(); } while (r >= limit);
    return r % n;
}

inline double uniform_unit(Rng& rng) {
    return double(rng() >> 11) * 0x1.0p-53;
}

/// Box-Muller standard normal.
inline double standard_normal(Rng& rng) {
    double u1;
    do { u1 = uniform_unit(rng); } while (u1 <= 0.0);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace eml
