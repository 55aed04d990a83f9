#pragma once

// Seedable random streams. Every stochastic routine takes an explicit
// engine (or a stream key) so results are reproducible under any worker
// schedule; nothing in the library ever seeds from the clock.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace mch {

using Rng = std::mt19937_64;

/// Derive an independent stream from a master seed and a path of indices
/// (e.g. {subproblem, coordinate}). Identical paths give identical streams.
inline Rng makeStream(std::uint64_t master, std::initializer_list<std::uint64_t> path = {}) {
    std::vector<std::uint32_t> material;
    material.reserve(2 + 2 * path.size());
    material.push_back(static_cast<std::uint32_t>(master));
    material.push_back(static_cast<std::uint32_t>(master >> 32));
    for (std::uint64_t v : path) {
        material.push_back(static_cast<std::uint32_t>(v));
        material.push_back(static_cast<std::uint32_t>(v >> 32));
    }
    std::seed_seq seq(material.begin(), material.end());
    return Rng(seq);
}

/// Uniform double in [0, 1) with 53 random bits. Implementation-independent,
/// unlike std::uniform_real_distribution.
inline double uniformDouble(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). Rejection over the top range keeps it unbiased.
inline std::uint64_t uniformIndex(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x > limit);
    return x % n;
}

/// Standard normal via Box-Muller (stateless, portable across libstdc++ versions).
inline double gaussian(Rng& rng) {
    double u1;
    do {
        u1 = uniformDouble(rng);
    } while (u1 == 0.0);
    const double u2 = uniformDouble(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace mch
