#pragma once

#include <cstdint>

namespace trinet {

/// Independent random streams derived from one user seed.
enum class SeedStream : std::uint64_t {
    Evaluation = 1,
    Visibility = 2,
    Resample = 3,
    Synthesis = 4,
    BoundSearch = 5,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for item `index` of `stream` under `base`.
inline std::uint64_t derive_seed(std::uint64_t base, SeedStream stream, std::uint64_t index = 0) {
    return splitmix64(splitmix64(base ^ (static_cast<std::uint64_t>(stream) << 56)) + index);
}

}  // namespace trinet
