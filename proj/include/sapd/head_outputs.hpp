// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "sapd/geometry.hpp"
#include "sapd/tensor.hpp"

namespace sapd {

/// Raw head outputs of one pyramid level: classification logits (K, H, W)
/// and pre-link localization outputs (4, H, W).
struct LevelOutputs {
  Tensor cls_logits;
  Tensor loc_raw;
};

using PyramidOutputs = std::vector<LevelOutputs>;

/// Localization link: distances are exp(raw), hence always positive.
inline DistanceTargets predicted_distances(const Tensor& loc_raw, int i, int j) {
  const auto x = static_cast<std::size_t>(i);
  const auto y = static_cast<std::size_t>(j);
  return {std::exp(loc_raw.at(0, y, x)), std::exp(loc_raw.at(1, y, x)),
          std::exp(loc_raw.at(2, y, x)), std::exp(loc_raw.at(3, y, x))};
}

/// Copies the K logits of anchor (i, j) out of a (K, H, W) map.
inline std::vector<float> anchor_logits(const Tensor& cls_logits, int i, int j) {
  std::vector<float> out(cls_logits.dim(0));
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = cls_logits.at(k, static_cast<std::size_t>(j), static_cast<std::size_t>(i));
  }
  return out;
}

}  // namespace sapd
