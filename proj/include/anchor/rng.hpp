#pragma once

#include <cstdint>
#include <random>

namespace anchor {

using Rng = std::mt19937_64;

/// Independent consumers of randomness. A run's master seed is expanded into
/// one stream per consumer, so extra draws in one never shift another.
enum class Stream : std::uint64_t {
  init = 1,
  task_transform = 2,
  data_order = 3,
  memory_sampling = 4,
  anchor_init = 5,
  finetune_order = 6,
  synthetic = 7,
  verification = 8,
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// seed' = mix(mix(master ^ stream * phi) ^ index)
constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                    std::uint64_t index = 0) {
  const auto tag = static_cast<std::uint64_t>(stream) * 0x9e3779b97f4a7c15ULL;
  return mix64(mix64(master ^ tag) ^ index);
}

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

}  // namespace anchor
