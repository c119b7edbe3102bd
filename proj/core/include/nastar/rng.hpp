// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstdint>

namespace nastar {

// Deterministic xoshiro256++ generator seeded through splitmix64.
// The sequence depends only on the seed value, never on the platform,
// so runs are reproducible bit-for-bit across machines.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();

  // Uniform in [lo, hi). Requires lo < hi.
  double uniform(double lo, double hi);

  // Uniform integer in [0, n). Requires n > 0. Rejection-sampled, unbiased.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Box-Muller. Draws exactly two uniforms per call.
  double normal();

  // Derives an independent generator for a named substream. Forking with
  // distinct stream ids from the same parent yields decorrelated sequences
  // and leaves the parent state untouched.
  Rng fork(std::uint64_t stream) const;

 private:
  Rng() = default;

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace nastar
