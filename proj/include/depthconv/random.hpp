// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0
//
// Platform-stable random helpers. std:: distributions are implementation
// defined, so draws go through explicit bit conversions instead.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace depthconv {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

// Uniform in [0, 1).
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Uniform integer in [lo, hi].
inline std::int64_t uniform_int(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(rng() % span);
}

inline double normal(std::mt19937_64& rng) {
    // Box-Muller; u1 in (0, 1].
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline void fill_uniform(std::span<double> out, std::mt19937_64& rng, double lo, double hi) {
    for (double& v : out) v = uniform(rng, lo, hi);
}

}  // namespace depthconv
