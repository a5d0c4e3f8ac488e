#pragma once

#include <cmath>
#include <cstdint>

namespace sbsde {

/// Counter-based normal variates: each draw is a pure function of
/// (seed, path, step), so path generation is order-independent and
/// reproducible across worker schedules.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t key(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
    std::uint64_t k = splitmix64(seed ^ 0x243f6a8885a308d3ULL);
    k = splitmix64(k ^ path);
    k = splitmix64(k ^ (step * 0x9e3779b97f4a7c15ULL));
    return k;
}

// uniform in (0,1), never exactly 0 or 1
inline double to_unit(std::uint64_t u) {
    return (static_cast<double>(u >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal keyed by (seed, path, step) via Box-Muller.
inline double normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
    const std::uint64_t k = key(seed, path, step);
    const double u1 = to_unit(k);
    const double u2 = to_unit(splitmix64(k));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

} // namespace rng
} // namespace sbsde
