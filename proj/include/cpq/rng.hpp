#pragma once

#include <cassert>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

namespace cpq {

using RngState = std::mt19937_64;

// SplitMix64 finalizer. Turns structured inputs (indices, xor-combined
// seeds) into well-mixed 64-bit values.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// FNV-1a 64-bit. std::hash<string> is implementation-defined, so derived
// seeds would not be stable across standard libraries; this is.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) noexcept {
    return splitmix64(master ^ splitmix64(salt));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b) noexcept {
    return derive_seed(derive_seed(master, a), b);
}

inline RngState make_rng(std::uint64_t seed) {
    return RngState(splitmix64(seed));
}

// Uniform in [0, 1) from the top 53 bits of one engine output.
inline double uniform_unit(RngState& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Unbiased integer in [0, n) by rejection; avoids the modulo bias and the
// implementation-defined std::uniform_int_distribution.
inline std::uint64_t uniform_below(RngState& rng, std::uint64_t n) {
    assert(n > 0);
    const std::uint64_t rem = std::numeric_limits<std::uint64_t>::max() % n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - rem;
    for (;;) {
        const std::uint64_t x = rng();
        if (x < limit || rem + 1 == n) return x % n;
    }
}

// Fisher-Yates with our own bounded draw, so shuffles are reproducible
// independent of the standard library.
template <typename T>
void shuffle(std::vector<T>& v, RngState& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace cpq
