#pragma once

#include <cstdint>
#include <random>

namespace qbv {

/// SplitMix64 step; used to fan one run seed out into independent
/// per-module seeds so changing one consumer cannot shift another.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Deterministic sub-seed for a named stream index.
inline uint64_t derive_seed(uint64_t root, uint64_t stream) {
    uint64_t s = root ^ (0xD1B54A32D192ED03ull * (stream + 1));
    return splitmix64(s);
}

inline std::mt19937_64 make_engine(uint64_t root, uint64_t stream) {
    return std::mt19937_64(derive_seed(root, stream));
}

}  // namespace qbv
