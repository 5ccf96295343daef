#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace bilevel {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Maps (parent, stream) to a well-mixed child seed so
/// that sibling streams are independent and the mapping is stable across
/// platforms and thread counts.
constexpr std::uint64_t split_seed(std::uint64_t parent, std::uint64_t stream) noexcept {
    std::uint64_t z = parent + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Folds a path of stream ids into one seed: derive_seed(root, {iter, k, ep}).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = root;
    for (auto p : path) s = split_seed(s, p);
    return s;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace bilevel
