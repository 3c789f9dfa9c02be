#pragma once

#include <cstdint>
#include <random>

namespace delta {

/// splitmix64 mixing step; used to derive statistically independent seeds
/// from a base seed and one or more indices.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Deterministic seed derivation: every parallel unit of work (a tree in a
/// bagged ensemble, a leaf regressor, a query slot) gets its own stream so
/// results do not depend on scheduling order.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return mix64(base ^ mix64(index + 1));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(base, a), b);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace delta
