// SPDX-License-Identifier: Apache-2.0
#include "sapd/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sapd {

std::string_view to_string(WeightMode mode) {
  switch (mode) {
    case WeightMode::both: return "both";
    case WeightMode::cls_only: return "cls_only";
    case WeightMode::loc_only: return "loc_only";
    case WeightMode::off: return "off";
  }
  return "both";
}

WeightMode parse_weight_mode(std::string_view name) {
  if (name == "both") return WeightMode::both;
  if (name == "cls_only") return WeightMode::cls_only;
  if (name == "loc_only") return WeightMode::loc_only;
  if (name == "off") return WeightMode::off;
  throw std::invalid_argument("unknown weighting mode '" + std::string(name) +
                              "' (expected both, cls_only, loc_only, off)");
}

void SoftWeightConfig::validate() const {
  if (!(eta >= 0.0f)) throw std::invalid_argument("weighting.eta must be >= 0");
  if (!(epsilon > 0.0f && epsilon <= 1.0f)) {
    throw std::invalid_argument("anchor.epsilon must lie in (0, 1]");
  }
}

float centerness(const DistanceTargets& d, float eta) {
  const float ratio = (std::min(d.left, d.right) * std::min(d.top, d.bottom)) /
                      (std::max(d.left, d.right) * std::max(d.top, d.bottom));
  if (eta == 1.0f) return ratio;
  return std::pow(ratio, eta);
}

float anchor_weight(const AnchorPoint& anchor, const std::optional<GroundTruthBox>& assigned,
                    std::optional<float> level_weight, const SoftWeightConfig& config, float z) {
  if (config.mode == WeightMode::off || !assigned) return 1.0f;
  const float level = level_weight.value_or(1.0f);
  if (!config.centerness) return level;
  return level * centerness(encode_targets(anchor, *assigned, z), config.eta);
}

}  // namespace sapd
