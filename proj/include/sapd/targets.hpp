// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "sapd/geometry.hpp"
#include "sapd/selection.hpp"
#include "sapd/weighting.hpp"

namespace sapd {

/// Per-anchor supervision of one pyramid level, row-major over the grid.
struct LevelTargets {
  int grid_width = 0;
  int grid_height = 0;
  std::vector<int> cls;        // 0 = background, else class id
  std::vector<int> instance;   // owning instance index, -1 for negatives
  std::vector<DistanceTargets> loc;  // meaningful on positives only
  std::vector<float> weight;   // attention weight, 1 on negatives

  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(grid_width) +
           static_cast<std::size_t>(i);
  }
};

struct TargetMaps {
  std::vector<LevelTargets> levels;

  std::size_t num_positives() const;
};

/// Builds classification, localization and weight targets. `assignments[b]`
/// lists the levels instance b is assigned to (empty: instance skipped).
/// An anchor is positive iff it lies inside the valid box of an instance
/// assigned to its level; when several instances claim it, the smallest area
/// wins, then the lower class id, then the lower instance index.
TargetMaps build_targets(std::span<const GroundTruthBox> boxes,
                         std::span<const std::vector<LevelAssignment>> assignments,
                         const PyramidSpec& pyramid, const SoftWeightConfig& weighting, float z);

}  // namespace sapd
