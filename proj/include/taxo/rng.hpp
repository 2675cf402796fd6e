#pragma once

// Deterministic sampling helpers. std::uniform_int_distribution and
// std::shuffle are not pinned down by the standard, so results differ
// across standard libraries. Everything here is defined in terms of raw
// mt19937_64 output and reproduces bit-for-bit anywhere.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace taxo::rng {

using Engine = std::mt19937_64;

// Uniform integer in [0, n). Rejection sampling on the top bits.
inline std::uint64_t bounded(Engine& eng, std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = eng();
    } while (x >= limit);
    return x % n;
}

// Uniform double in [0, 1) with 53 bits of randomness.
inline double uniform01(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& eng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(eng);
}

// Box-Muller. Draws two uniforms per call; the sine branch is discarded.
inline double gaussian(Engine& eng) {
    double u1 = uniform01(eng);
    double u2 = uniform01(eng);
    while (u1 <= 0.0) u1 = uniform01(eng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Fisher-Yates.
template <typename T>
void shuffle(std::vector<T>& v, Engine& eng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(bounded(eng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// k distinct indices drawn from [0, n), in draw order.
inline std::vector<int> sample_without_replacement(int n, int k, Engine& eng) {
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    if (k > n) k = n;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        std::size_t j = static_cast<std::size_t>(bounded(eng, pool.size() - static_cast<std::size_t>(i)));
        out.push_back(pool[j]);
        std::swap(pool[j], pool[pool.size() - 1 - static_cast<std::size_t>(i)]);
    }
    return out;
}

}  // namespace taxo::rng
