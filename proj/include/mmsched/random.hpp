#pragma once

#include <array>
#include <cstdint>
#include <random>

namespace mmsched {

using Rng = std::mt19937_64;

/// Independent random streams of one run. Each consumer draws from its own
/// stream so that swapping the policy leaves channel and arrival draws intact.
enum class Stream : std::uint32_t {
    link = 1,
    arrivals = 2,
    policy = 3,
    service = 4,
    scene = 5,
    perturb = 6,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), 0x6d6d5763u};
    return Rng(seq);
}

/// Uniform draw in [0, 1) built from the raw 64-bit output, independent of
/// the standard library's distribution implementation.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(Rng& rng, double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform01(rng) < p;
}

}  // namespace mmsched
