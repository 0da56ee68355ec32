#pragma once
// Portable deterministic randomness: the mt19937_64 raw sequence is pinned
// by the C++ standard; doubles use the explicit (x >> 11) * 2^-53 mapping
// instead of unpinned standard-library distributions.

#include <cstdint>
#include <random>

namespace pat {

inline double rng_uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double rng_uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * rng_uniform01(rng);
}

// Fisher-Yates with a modulo draw (bias is immaterial here; determinism is not).
template <typename T>
void rng_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng() % i]);
}

}  // namespace pat
