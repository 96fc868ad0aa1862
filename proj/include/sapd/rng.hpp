// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>

#include "sapd/tensor.hpp"

namespace sapd {

/// SplitMix64 generator. Every random draw in the library goes through this
/// so that a run is fully determined by its seed.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) { return next() % n; }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();

 private:
  std::uint64_t state_;
  std::optional<double> spare_;
};

/// Derives an independent stream seed from a base seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

Tensor gaussian_init(Shape shape, float sigma, std::uint64_t seed);
Tensor gaussian_init(Shape shape, float sigma, SplitMix64& rng);
Tensor bias_init(Shape shape, float value);

/// Classification bias giving every class an initial probability of `prior`:
/// -log((1 - prior) / prior).
float prior_bias(float prior);

}  // namespace sapd
