// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "sapd/geometry.hpp"
#include "sapd/inference.hpp"

namespace sapd {

struct ApMetrics {
  double ap = 0.0;    // mean over IoU thresholds 0.50:0.05:0.95
  double ap50 = 0.0;
  double ap75 = 0.0;
  std::vector<double> per_threshold;
};

inline constexpr int kMaxDetectionsPerImage = 100;

/// Precision envelope sampled at 101 recall points 0, 0.01, ..., 1.
/// `tp` flags detections in descending score order.
double interpolated_ap(const std::vector<bool>& tp, std::size_t num_ground_truth);

/// AP of one class at one IoU threshold. Detections are matched greedily in
/// descending score order to the unmatched ground truth of highest IoU
/// (IoU >= threshold), each ground truth at most once.
double class_average_precision(std::span<const std::vector<Detection>> detections,
                               std::span<const std::vector<GroundTruthBox>> ground_truth,
                               int class_id, float iou_threshold);

/// Class-averaged AP over classes that have ground truth. Only the
/// kMaxDetectionsPerImage highest-scoring detections of each image count.
ApMetrics evaluate(std::span<const std::vector<Detection>> detections,
                   std::span<const std::vector<GroundTruthBox>> ground_truth, int num_classes);

}  // namespace sapd
