#pragma once

// Seed derivation and platform-stable sampling helpers.
//
// Every random stream in a run is seeded with derive_seed(root, role), so adding a
// new consumer never shifts the numbers an existing one sees. Sampling goes
// through the helpers below instead of <random> distributions, whose outputs are
// implementation-defined.

#include <cstdint>
#include <random>
#include <string_view>

namespace delaynet {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a of the role string, mixed with the root seed.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view role) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : role) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(root ^ splitmix64(h));
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view role,
                                    std::uint64_t index) noexcept {
    return splitmix64(derive_seed(root, role) + splitmix64(index));
}

using Rng = std::mt19937_64;

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [lo, hi] (inclusive), rejection-sampled.
inline std::uint64_t uniform_int(Rng& rng, std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t span = hi - lo;
    if (span == UINT64_MAX) return rng();
    const std::uint64_t range = span + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return lo + x % range;
}

inline bool bernoulli(Rng& rng, double p) {
    return uniform01(rng) < p;
}

} // namespace delaynet
