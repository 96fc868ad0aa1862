// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>

namespace sapd {

/// Pyramid levels min_level..max_level over a W x H image; level l has stride 2^l.
struct PyramidSpec {
  int min_level = 2;
  int max_level = 5;
  int image_width = 64;
  int image_height = 64;

  /// Throws std::invalid_argument unless levels are ordered and the image is
  /// divisible by the coarsest stride.
  void validate() const;

  int num_levels() const { return max_level - min_level + 1; }
  int level_at(int index) const { return min_level + index; }
  int index_of(int level) const { return level - min_level; }
  static int stride(int level) { return 1 << level; }
  int grid_width(int level) const { return image_width / stride(level); }
  int grid_height(int level) const { return image_height / stride(level); }
  std::size_t anchors_on(int level) const {
    return static_cast<std::size_t>(grid_width(level)) * static_cast<std::size_t>(grid_height(level));
  }
  std::size_t total_anchors() const;
};

/// Ground-truth instance in center form. class_id >= 1; 0 is background.
struct GroundTruthBox {
  int class_id = 1;
  float cx = 0.0f;
  float cy = 0.0f;
  float w = 0.0f;
  float h = 0.0f;

  float area() const { return w * h; }
  bool operator==(const GroundTruthBox&) const = default;
};

/// Axis-aligned box in corner form.
struct CornerBox {
  float x1 = 0.0f;
  float y1 = 0.0f;
  float x2 = 0.0f;
  float y2 = 0.0f;

  float width() const { return x2 - x1; }
  float height() const { return y2 - y1; }
  float area() const { return (x2 > x1 && y2 > y1) ? (x2 - x1) * (y2 - y1) : 0.0f; }
  bool operator==(const CornerBox&) const = default;
};

/// A pixel (i = column, j = row) on pyramid level `level`.
struct AnchorPoint {
  int level = 0;
  int i = 0;
  int j = 0;

  float stride() const { return static_cast<float>(PyramidSpec::stride(level)); }
  float x() const { return stride() * (static_cast<float>(i) + 0.5f); }
  float y() const { return stride() * (static_cast<float>(j) + 0.5f); }
};

/// Normalized distances from an anchor to the left, top, right, bottom edges.
struct DistanceTargets {
  float left = 0.0f;
  float top = 0.0f;
  float right = 0.0f;
  float bottom = 0.0f;

  bool all_positive() const { return left > 0.0f && top > 0.0f && right > 0.0f && bottom > 0.0f; }
};

inline constexpr float kDecodeFloor = 1e-4f;

CornerBox to_corners(const GroundTruthBox& box);
/// Clips the box to the image and recenters it; returns nullopt if nothing
/// of positive area remains.
std::optional<GroundTruthBox> clip_to_image(const GroundTruthBox& box, float width, float height);
CornerBox clip_to_image(const CornerBox& box, float width, float height);

/// Central shrunk box: same class and center, extents scaled by epsilon.
GroundTruthBox valid_box(const GroundTruthBox& box, float epsilon);

/// Closed-boundary point membership.
bool contains(const GroundTruthBox& box, float x, float y);

/// True when the point is strictly inside, i.e. all encoded distances are positive.
bool strictly_contains(const GroundTruthBox& box, float x, float y);

/// Throws std::domain_error unless the anchor is strictly inside the box.
DistanceTargets encode_targets(const AnchorPoint& anchor, const GroundTruthBox& box, float z);

/// Inverse of encode_targets. Non-positive distances become kDecodeFloor; when
/// image extents are given, the result is clipped to [0, W] x [0, H].
CornerBox decode_box(const AnchorPoint& anchor, const DistanceTargets& d, float z);
CornerBox decode_box(const AnchorPoint& anchor, const DistanceTargets& d, float z,
                     float image_width, float image_height);

/// Intersection over union; 0 for disjoint or zero-area boxes.
float iou(const CornerBox& a, const CornerBox& b);

}  // namespace sapd
