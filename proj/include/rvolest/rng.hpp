#pragma once

#include <cstdint>
#include <random>

namespace rvolest {

enum class Lane : std::uint32_t { Brownian = 0, Jumps = 1, Spikes = 2 };

using Engine = std::mt19937_64;

/// Independent generator for (seed, replication, lane). Derivation depends
/// only on the triple, so replications can be scheduled in any order and a
/// change in one lane's consumption never shifts another lane.
inline Engine rng_stream(std::uint64_t seed, std::uint64_t replication, Lane lane) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replication), static_cast<std::uint32_t>(replication >> 32),
                      static_cast<std::uint32_t>(lane), 0x72766f6cU};
    return Engine(seq);
}

} // namespace rvolest
