// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <utility>

#include "sapd/geometry.hpp"
#include "sapd/rng.hpp"
#include "sapd/selection.hpp"

namespace sapd {
namespace {

TEST(Pyramid, GridSizesAndValidation) {
  const PyramidSpec p{2, 5, 64, 64};
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.num_levels(), 4);
  EXPECT_EQ(p.grid_width(2), 16);
  EXPECT_EQ(p.grid_width(5), 2);
  EXPECT_EQ(p.total_anchors(), 256u + 64u + 16u + 4u);
  EXPECT_THROW((PyramidSpec{2, 5, 72, 64}).validate(), std::invalid_argument);
  EXPECT_THROW((PyramidSpec{4, 3, 64, 64}).validate(), std::invalid_argument);
}

TEST(AnchorPoint, LatticeSpacingEqualsStride) {
  for (int level = 2; level <= 7; ++level) {
    for (int i = 1; i < 8; ++i) {
      const AnchorPoint a{level, i, 0};
      const AnchorPoint b{level, i - 1, 0};
      EXPECT_EQ(a.x() - b.x(), static_cast<float>(1 << level));
    }
    EXPECT_EQ((AnchorPoint{level, 0, 0}).x(), 0.5f * static_cast<float>(1 << level));
  }
}

TEST(ValidBox, Shrink) {
  EXPECT_EQ(valid_box({1, 64, 64, 64, 64}, 1.0f), (GroundTruthBox{1, 64, 64, 64, 64}));
  const GroundTruthBox v = valid_box({1, 64, 64, 64, 64}, 0.2f);
  EXPECT_EQ(v.class_id, 1);
  EXPECT_EQ(v.cx, 64.0f);
  EXPECT_FLOAT_EQ(v.w, 12.8f);
  EXPECT_FLOAT_EQ(v.h, 12.8f);
  EXPECT_EQ(valid_box({2, 10, 20, 30, 40}, 0.5f), (GroundTruthBox{2, 10, 20, 15, 20}));
}

TEST(Contains, ClosedBoundary) {
  const GroundTruthBox b{1, 64, 64, 12.8f, 12.8f};
  EXPECT_TRUE(contains(b, 60, 60));
  EXPECT_FALSE(contains(b, 71, 64));
  EXPECT_TRUE(contains(b, 64, 64));
  const GroundTruthBox unit{1, 10, 10, 4, 4};
  EXPECT_TRUE(contains(unit, 12, 10));
  EXPECT_FALSE(strictly_contains(unit, 12, 10));
}

TEST(Encode, WorkedExample) {
  const DistanceTargets d = encode_targets({3, 7, 7}, {1, 64, 64, 64, 64}, 4.0f);
  EXPECT_FLOAT_EQ(d.left, 0.875f);
  EXPECT_FLOAT_EQ(d.top, 0.875f);
  EXPECT_FLOAT_EQ(d.right, 1.125f);
  EXPECT_FLOAT_EQ(d.bottom, 1.125f);
}

TEST(Encode, CenteredAnchorIsSymmetricAndLinearInInverseZ) {
  const GroundTruthBox b{1, 60, 60, 40, 40};
  const AnchorPoint a{3, 7, 7};
  const DistanceTargets d = encode_targets(a, b, 4.0f);
  EXPECT_EQ(d.left, d.right);
  EXPECT_EQ(d.top, d.bottom);
  EXPECT_EQ(d.left, d.top);
  const DistanceTargets half = encode_targets(a, b, 8.0f);
  EXPECT_FLOAT_EQ(half.left, d.left / 2.0f);
  EXPECT_FLOAT_EQ(half.bottom, d.bottom / 2.0f);
}

TEST(Encode, RejectsAnchorOutsideBox) {
  EXPECT_THROW(encode_targets({3, 0, 0}, {1, 64, 64, 10, 10}, 4.0f), std::domain_error);
}

TEST(Decode, WorkedExampleAndClipping) {
  const CornerBox c = decode_box({3, 7, 7}, {1, 1, 1, 1}, 4.0f);
  EXPECT_EQ(c, (CornerBox{28, 28, 92, 92}));
  const CornerBox clipped = decode_box({3, 7, 7}, {1, 1, 1, 1}, 4.0f, 64.0f, 80.0f);
  EXPECT_EQ(clipped, (CornerBox{28, 28, 64, 80}));
}

TEST(Decode, NonPositiveDistancesAreFloored) {
  const CornerBox c = decode_box({3, 7, 7}, {-1, 0, 1, 1}, 4.0f);
  EXPECT_GT(c.x2, c.x1);
  EXPECT_GT(c.y2, c.y1);
  EXPECT_FLOAT_EQ(c.x1, 60.0f - 32.0f * kDecodeFloor);
}

TEST(Geometry, RoundTripProperty) {
  SplitMix64 rng(123);
  int checked = 0;
  while (checked < 2000) {
    const int level = 2 + static_cast<int>(rng.below(6));
    const GroundTruthBox b{1, static_cast<float>(rng.uniform(0, 512)),
                           static_cast<float>(rng.uniform(0, 512)),
                           static_cast<float>(rng.uniform(1, 300)),
                           static_cast<float>(rng.uniform(1, 300))};
    const float s = static_cast<float>(1 << level);
    // Any lattice point inside, including ones hugging an edge.
    const CornerBox want = to_corners(b);
    const int i0 = static_cast<int>(std::ceil(want.x1 / s - 0.5f));
    const int i1 = static_cast<int>(std::floor(want.x2 / s - 0.5f));
    const int j0 = static_cast<int>(std::ceil(want.y1 / s - 0.5f));
    const int j1 = static_cast<int>(std::floor(want.y2 / s - 0.5f));
    if (i1 < i0 || j1 < j0) continue;
    const AnchorPoint a{level, i0 + static_cast<int>(rng.below(static_cast<std::uint64_t>(i1 - i0 + 1))),
                        j0 + static_cast<int>(rng.below(static_cast<std::uint64_t>(j1 - j0 + 1)))};
    if (!strictly_contains(b, a.x(), a.y())) continue;
    const float z = static_cast<float>(rng.uniform(0.5, 8));
    const CornerBox back = decode_box(a, encode_targets(a, b, z), z);
    // Relative to the largest operand, the anchor coordinate included.
    const float scale = std::max({1.0f, a.x(), a.y(), std::fabs(want.x1), std::fabs(want.y1),
                                  std::fabs(want.x2), std::fabs(want.y2)});
    for (auto [got, expected] : {std::pair{back.x1, want.x1}, {back.y1, want.y1}, {back.x2, want.x2},
                                 {back.y2, want.y2}}) {
      EXPECT_NEAR(got, expected, 1e-6f * scale);
    }
    ++checked;
  }
}

TEST(Decode, TinyPositiveDistancesAreKept) {
  const AnchorPoint a{3, 7, 7};
  const CornerBox c = decode_box(a, {1e-6f, 1.0f, 1.0f, 1.0f}, 4.0f);
  EXPECT_FLOAT_EQ(c.x1, 60.0f - 32.0f * 1e-6f);
}

TEST(Iou, Examples) {
  const CornerBox a{0, 0, 2, 2};
  EXPECT_EQ(iou(a, a), 1.0f);
  EXPECT_EQ(iou(a, {5, 5, 6, 6}), 0.0f);
  EXPECT_NEAR(iou(a, {1, 1, 3, 3}), 1.0f / 7.0f, 1e-6f);
  EXPECT_EQ(iou(a, {1, 1, 1, 3}), 0.0f);
  EXPECT_EQ(iou({1, 1, 1, 1}, {1, 1, 1, 1}), 0.0f);
}

TEST(Iou, SymmetricAndBounded) {
  SplitMix64 rng(77);
  for (int n = 0; n < 1000; ++n) {
    auto box = [&] {
      const float x = static_cast<float>(rng.uniform(0, 50));
      const float y = static_cast<float>(rng.uniform(0, 50));
      return CornerBox{x, y, x + static_cast<float>(rng.uniform(0.1, 30)),
                       y + static_cast<float>(rng.uniform(0.1, 30))};
    };
    const CornerBox a = box(), b = box();
    const float ab = iou(a, b);
    EXPECT_EQ(ab, iou(b, a));
    EXPECT_GE(ab, 0.0f);
    EXPECT_LE(ab, 1.0f);
    EXPECT_EQ(iou(a, a), 1.0f);
  }
}

TEST(ClipToImage, KeepsInsideBoxesBitExactAndClipsOthers) {
  const GroundTruthBox inside{1, 10.3f, 20.7f, 5.1f, 6.9f};
  EXPECT_EQ(*clip_to_image(inside, 64, 64), inside);
  const auto clipped = clip_to_image(GroundTruthBox{1, 2, 32, 10, 10}, 64, 64);
  ASSERT_TRUE(clipped);
  EXPECT_FLOAT_EQ(clipped->w, 7.0f);
  EXPECT_FLOAT_EQ(clipped->cx, 3.5f);
  EXPECT_FALSE(clip_to_image(GroundTruthBox{1, -20, 32, 10, 10}, 64, 64));
}

TEST(Positives, ShrinkMonotonicity) {
  SplitMix64 rng(31);
  for (int n = 0; n < 300; ++n) {
    const GroundTruthBox b{1, static_cast<float>(rng.uniform(10, 118)),
                           static_cast<float>(rng.uniform(10, 118)),
                           static_cast<float>(rng.uniform(4, 100)),
                           static_cast<float>(rng.uniform(4, 100))};
    const int level = 2 + static_cast<int>(rng.below(4));
    const int g = 128 >> level;
    const float e1 = static_cast<float>(rng.uniform(0.05, 1.0));
    const float e2 = static_cast<float>(rng.uniform(e1, 1.0));
    const auto small = positive_anchors(b, level, g, g, e1);
    const auto large = positive_anchors(b, level, g, g, e2);
    for (const AnchorPoint& a : small) {
      const bool found = std::any_of(large.begin(), large.end(), [&](const AnchorPoint& o) {
        return o.i == a.i && o.j == a.j;
      });
      EXPECT_TRUE(found);
    }
  }
}

}  // namespace
}  // namespace sapd
