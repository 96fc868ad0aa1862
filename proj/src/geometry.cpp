// SPDX-License-Identifier: Apache-2.0
#include "sapd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sapd {

void PyramidSpec::validate() const {
  if (min_level < 0 || max_level > 12 || min_level > max_level) {
    throw std::invalid_argument("pyramid: need 0 <= min_level <= max_level <= 12, got " +
                                std::to_string(min_level) + ".." + std::to_string(max_level));
  }
  const int coarsest = stride(max_level);
  if (image_width <= 0 || image_height <= 0 || image_width % coarsest != 0 ||
      image_height % coarsest != 0) {
    throw std::invalid_argument("pyramid: image " + std::to_string(image_width) + "x" +
                                std::to_string(image_height) + " not divisible by stride " +
                                std::to_string(coarsest));
  }
}

std::size_t PyramidSpec::total_anchors() const {
  std::size_t n = 0;
  for (int l = min_level; l <= max_level; ++l) n += anchors_on(l);
  return n;
}

CornerBox to_corners(const GroundTruthBox& box) {
  return {box.cx - box.w / 2.0f, box.cy - box.h / 2.0f, box.cx + box.w / 2.0f,
          box.cy + box.h / 2.0f};
}

std::optional<GroundTruthBox> clip_to_image(const GroundTruthBox& box, float width, float height) {
  const CornerBox corners = to_corners(box);
  if (corners.x1 >= 0.0f && corners.y1 >= 0.0f && corners.x2 <= width && corners.y2 <= height &&
      box.w > 0.0f && box.h > 0.0f) {
    return box;
  }
  const CornerBox c = clip_to_image(corners, width, height);
  if (!(c.x2 > c.x1) || !(c.y2 > c.y1)) return std::nullopt;
  return GroundTruthBox{box.class_id, (c.x1 + c.x2) / 2.0f, (c.y1 + c.y2) / 2.0f, c.x2 - c.x1,
                        c.y2 - c.y1};
}

CornerBox clip_to_image(const CornerBox& box, float width, float height) {
  return {std::clamp(box.x1, 0.0f, width), std::clamp(box.y1, 0.0f, height),
          std::clamp(box.x2, 0.0f, width), std::clamp(box.y2, 0.0f, height)};
}

GroundTruthBox valid_box(const GroundTruthBox& box, float epsilon) {
  return {box.class_id, box.cx, box.cy, epsilon * box.w, epsilon * box.h};
}

bool contains(const GroundTruthBox& box, float x, float y) {
  return std::fabs(x - box.cx) <= box.w / 2.0f && std::fabs(y - box.cy) <= box.h / 2.0f;
}

bool strictly_contains(const GroundTruthBox& box, float x, float y) {
  return x - (box.cx - box.w / 2.0f) > 0.0f && (box.cx + box.w / 2.0f) - x > 0.0f &&
         y - (box.cy - box.h / 2.0f) > 0.0f && (box.cy + box.h / 2.0f) - y > 0.0f;
}

DistanceTargets encode_targets(const AnchorPoint& anchor, const GroundTruthBox& box, float z) {
  const float x = anchor.x();
  const float y = anchor.y();
  const float norm = z * anchor.stride();
  DistanceTargets d{(x - (box.cx - box.w / 2.0f)) / norm, (y - (box.cy - box.h / 2.0f)) / norm,
                    ((box.cx + box.w / 2.0f) - x) / norm, ((box.cy + box.h / 2.0f) - y) / norm};
  if (!d.all_positive()) {
    throw std::domain_error("encode_targets: anchor (" + std::to_string(x) + ", " +
                            std::to_string(y) + ") is not strictly inside the box");
  }
  return d;
}

namespace {

// Only non-positive (or NaN) distances are replaced; tiny positive ones must survive the round trip.
float floored(float d) { return d > 0.0f ? d : kDecodeFloor; }

}  // namespace

CornerBox decode_box(const AnchorPoint& anchor, const DistanceTargets& d, float z) {
  const float x = anchor.x();
  const float y = anchor.y();
  const float scale = z * anchor.stride();
  return {x - scale * floored(d.left), y - scale * floored(d.top), x + scale * floored(d.right),
          y + scale * floored(d.bottom)};
}

CornerBox decode_box(const AnchorPoint& anchor, const DistanceTargets& d, float z,
                     float image_width, float image_height) {
  return clip_to_image(decode_box(anchor, d, z), image_width, image_height);
}

float iou(const CornerBox& a, const CornerBox& b) {
  const float area_a = a.area();
  const float area_b = b.area();
  if (area_a <= 0.0f || area_b <= 0.0f) return 0.0f;
  const float iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const float ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0f || ih <= 0.0f) return 0.0f;
  const float inter = iw * ih;
  return std::min(1.0f, inter / (area_a + area_b - inter));
}

}  // namespace sapd
