#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ridge_relay {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of an independent stream addressed by (master, path...), e.g.
/// stream_seed(seed, replicate, batch). Streams never depend on evaluation order.
constexpr std::uint64_t stream_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = mix64(master);
    for (std::uint64_t part : path) h = mix64(h ^ mix64(part + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path = {}) {
    return Rng(stream_seed(master, path));
}

}  // namespace ridge_relay
