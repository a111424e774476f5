// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADVTTS_PRNG_HPP
#define ADVTTS_PRNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace advtts {

// SplitMix64 stream used everywhere reproducibility matters: weight init,
// corpus generation, batch sampling, probe shuffles. The exact update and the
// uniform/gaussian derivations below are part of the on-disk contract; any
// reimplementation (in tests or another language) must agree bit for bit.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller: consumes exactly two uniforms per call,
  // no caching of the second variate. 1-u1 keeps the log argument in (0, 1].
  double gaussian() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(1.0 - u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }

 private:
  std::uint64_t state_;
};

}  // namespace advtts

#endif  // ADVTTS_PRNG_HPP
