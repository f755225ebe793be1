#pragma once

#include <cstdint>

#include "ptrial/math.hpp"

namespace ptrial {

// SplitMix64 stream with hash-derived substreams. Substream k of seed s
// is independent of how many draws other substreams have consumed, so
// parallel Monte Carlo runs are reproducible regardless of scheduling.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Deterministic substream derivation from (seed, stream id).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    return mix(seed ^ mix(stream + 0xD1B54A32D192ED03ULL));
  }
  static SplitMix64 substream(std::uint64_t seed, std::uint64_t stream) {
    return SplitMix64(derive(seed, stream));
  }

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1); safe as inverse-CDF input.
  double next_open() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Standard normal via inverse CDF; keeps draw counts fixed per call.
  double normal() { return normal_quantile(next_open()); }

 private:
  std::uint64_t state_;
};

}  // namespace ptrial
