// SPDX-License-Identifier: Apache-2.0
#include "sapd/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sapd {

double SplitMix64::normal() {
  if (spare_) {
    double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  SplitMix64 mix(base ^ (stream * 0xD1B54A32D192ED03ull));
  mix.next();
  return mix.next();
}

Tensor gaussian_init(Shape shape, float sigma, SplitMix64& rng) {
  if (!(sigma > 0.0f)) throw std::invalid_argument("gaussian_init: sigma must be positive");
  Tensor t(std::move(shape));
  for (float& v : t.values()) v = static_cast<float>(sigma * rng.normal());
  return t;
}

Tensor gaussian_init(Shape shape, float sigma, std::uint64_t seed) {
  SplitMix64 rng(seed);
  return gaussian_init(std::move(shape), sigma, rng);
}

Tensor bias_init(Shape shape, float value) { return Tensor(std::move(shape), value); }

float prior_bias(float prior) {
  return static_cast<float>(-std::log((1.0 - prior) / prior));
}

}  // namespace sapd
