#pragma once

#include <cstdint>
#include <random>

namespace fbands {

using Rng = std::mt19937_64;

[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based seed splitting: a child seed for stream (a, b) of `seed`.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                                  std::uint64_t b = 0) noexcept {
    return splitmix64(splitmix64(splitmix64(seed) ^ (a + 0x632be59bd9b4e019ULL)) ^
                      (b + 0x85157af5ULL));
}

[[nodiscard]] inline Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return Rng(derive_seed(seed, a, b));
}

/// Uniform index in [0, n).
[[nodiscard]] inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Stream tags that keep unrelated consumers of one seed apart.
inline constexpr std::uint64_t kReplicateStream = 1;
inline constexpr std::uint64_t kDepthStream = 2;
inline constexpr std::uint64_t kDayStream = 3;
inline constexpr std::uint64_t kSynthStream = 4;

} // namespace fbands
