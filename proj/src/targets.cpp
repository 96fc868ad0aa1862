// SPDX-License-Identifier: Apache-2.0
#include "sapd/targets.hpp"

#include <stdexcept>
#include <tuple>

namespace sapd {

std::size_t TargetMaps::num_positives() const {
  std::size_t n = 0;
  for (const LevelTargets& level : levels) {
    for (int owner : level.instance) n += owner >= 0 ? 1 : 0;
  }
  return n;
}

TargetMaps build_targets(std::span<const GroundTruthBox> boxes,
                         std::span<const std::vector<LevelAssignment>> assignments,
                         const PyramidSpec& pyramid, const SoftWeightConfig& weighting, float z) {
  if (assignments.size() != boxes.size()) {
    throw std::invalid_argument("build_targets: one assignment list per instance required");
  }
  TargetMaps maps;
  maps.levels.resize(static_cast<std::size_t>(pyramid.num_levels()));
  for (int idx = 0; idx < pyramid.num_levels(); ++idx) {
    const int level = pyramid.level_at(idx);
    LevelTargets& t = maps.levels[static_cast<std::size_t>(idx)];
    t.grid_width = pyramid.grid_width(level);
    t.grid_height = pyramid.grid_height(level);
    const std::size_t n = pyramid.anchors_on(level);
    t.cls.assign(n, 0);
    t.instance.assign(n, -1);
    t.loc.assign(n, DistanceTargets{});
    t.weight.assign(n, 1.0f);
    std::vector<std::optional<float>> owner_level_weight(n);

    auto precedes = [&](int a, int b) {
      const GroundTruthBox& ba = boxes[static_cast<std::size_t>(a)];
      const GroundTruthBox& bb = boxes[static_cast<std::size_t>(b)];
      return std::tuple(ba.area(), ba.class_id, a) < std::tuple(bb.area(), bb.class_id, b);
    };

    for (std::size_t b = 0; b < boxes.size(); ++b) {
      for (const LevelAssignment& as : assignments[b]) {
        if (as.level_index != idx) continue;
        for (const AnchorPoint& a : positive_anchors(boxes[b], level, t.grid_width, t.grid_height,
                                                     weighting.epsilon)) {
          const std::size_t k = t.index(a.i, a.j);
          const int current = t.instance[k];
          if (current >= 0 && !precedes(static_cast<int>(b), current)) continue;
          t.instance[k] = static_cast<int>(b);
          owner_level_weight[k] = as.weight;
        }
      }
    }

    for (int j = 0; j < t.grid_height; ++j) {
      for (int i = 0; i < t.grid_width; ++i) {
        const std::size_t k = t.index(i, j);
        if (t.instance[k] < 0) continue;
        const GroundTruthBox& box = boxes[static_cast<std::size_t>(t.instance[k])];
        const AnchorPoint anchor{level, i, j};
        t.cls[k] = box.class_id;
        t.loc[k] = encode_targets(anchor, box, z);
        t.weight[k] = anchor_weight(anchor, box, owner_level_weight[k], weighting, z);
      }
    }
  }
  return maps;
}

}  // namespace sapd
