#pragma once

#include <cstdint>
#include <random>

namespace ntd {

using Rng = std::mt19937_64;

/// Named sub-streams derived from one experiment seed. Every consumer of
/// randomness gets its own stream so that, e.g., changing the projection
/// radius never perturbs the sampled trajectory of a paired run.
enum class Stream : std::uint32_t {
    environment = 1,
    network_init = 2,
    sampler = 3,
    target = 4,
    probe = 5,
    verify = 6,
};

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    return Rng(derive_seed(seed, stream, index));
}

}  // namespace ntd
