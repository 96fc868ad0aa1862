// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "sapd/geometry.hpp"

namespace sapd {

/// Which loss terms of a positive anchor the attention weight multiplies.
enum class WeightMode { both, cls_only, loc_only, off };

std::string_view to_string(WeightMode mode);
/// Throws std::invalid_argument for unknown names.
WeightMode parse_weight_mode(std::string_view name);

struct SoftWeightConfig {
  float eta = 1.0f;
  float epsilon = 0.2f;
  WeightMode mode = WeightMode::both;
  /// When false the centerness factor is fixed at 1 (only level weights apply).
  bool centerness = true;

  void validate() const;

  bool weights_cls() const { return mode == WeightMode::both || mode == WeightMode::cls_only; }
  bool weights_loc() const { return mode == WeightMode::both || mode == WeightMode::loc_only; }
};

/// Generalized centerness
///   [min(l, r) * min(t, b) / (max(l, r) * max(t, b))]^eta,
/// in (0, 1] for positive distances, 1 exactly when the anchor is centered.
float centerness(const DistanceTargets& d, float eta);

/// Attention weight of one anchor. Negatives (no assigned instance) get 1.
/// For a positive anchor the weight is level_weight * centerness, with an
/// absent level weight read as 1. mode == off yields 1 everywhere.
float anchor_weight(const AnchorPoint& anchor, const std::optional<GroundTruthBox>& assigned,
                    std::optional<float> level_weight, const SoftWeightConfig& config, float z);

}  // namespace sapd
