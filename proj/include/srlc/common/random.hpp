#pragma once

#include <cstdint>
#include <random>

namespace srlc {

using Rng = std::mt19937_64;

// Named random streams. Every stochastic component draws from its own stream
// derived from the run seed, so adding draws in one place never shifts
// another.
enum class Stream : std::uint64_t {
  kEnvNoise = 1,
  kReference = 2,
  kDisturbance = 3,
  kPolicyInit = 4,
  kExploration = 5,
  kShuffle = 6,
  kEpisode = 7,
  kInitialState = 8,
  kProbe = 9,
  kSystem = 10,
};

std::uint64_t splitmix64(std::uint64_t x);

// Deterministic child seed for (seed, stream, index).
std::uint64_t derive_seed(std::uint64_t seed, Stream stream,
                          std::uint64_t index = 0);

// Uniform double in [0, 1) as a pure function of the key.
double hash_uniform(std::uint64_t key);

inline Rng make_rng(std::uint64_t seed, Stream stream,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

}  // namespace srlc
