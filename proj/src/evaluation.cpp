// SPDX-License-Identifier: Apache-2.0
#include "sapd/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace sapd {

double interpolated_ap(const std::vector<bool>& tp, std::size_t num_ground_truth) {
  if (num_ground_truth == 0) return 0.0;
  std::vector<double> recall(tp.size());
  std::vector<double> precision(tp.size());
  std::size_t hits = 0;
  for (std::size_t n = 0; n < tp.size(); ++n) {
    hits += tp[n] ? 1 : 0;
    recall[n] = static_cast<double>(hits) / static_cast<double>(num_ground_truth);
    precision[n] = static_cast<double>(hits) / static_cast<double>(n + 1);
  }
  for (std::size_t n = precision.size(); n-- > 1;) {
    precision[n - 1] = std::max(precision[n - 1], precision[n]);
  }
  double sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double target = r / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), target);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

namespace {

std::vector<std::vector<Detection>> capped(std::span<const std::vector<Detection>> detections) {
  std::vector<std::vector<Detection>> out;
  out.reserve(detections.size());
  for (const auto& dets : detections) {
    std::vector<Detection> d = dets;
    std::stable_sort(d.begin(), d.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    if (d.size() > static_cast<std::size_t>(kMaxDetectionsPerImage)) {
      d.resize(static_cast<std::size_t>(kMaxDetectionsPerImage));
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

double class_average_precision(std::span<const std::vector<Detection>> detections,
                               std::span<const std::vector<GroundTruthBox>> ground_truth,
                               int class_id, float iou_threshold) {
  if (detections.size() != ground_truth.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(detections.size()) +
                                " detection lists for " + std::to_string(ground_truth.size()) +
                                " images");
  }
  struct Candidate {
    float score;
    std::size_t image;
    const Detection* det;
  };
  std::vector<Candidate> candidates;
  std::vector<std::vector<CornerBox>> gts(ground_truth.size());
  std::size_t num_gt = 0;
  for (std::size_t img = 0; img < ground_truth.size(); ++img) {
    for (const GroundTruthBox& g : ground_truth[img]) {
      if (g.class_id == class_id) gts[img].push_back(to_corners(g));
    }
    num_gt += gts[img].size();
    for (const Detection& d : detections[img]) {
      if (d.class_id == class_id) candidates.push_back({d.score, img, &d});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> matched(ground_truth.size());
  for (std::size_t img = 0; img < gts.size(); ++img) matched[img].assign(gts[img].size(), false);
  std::vector<bool> tp(candidates.size(), false);
  for (std::size_t n = 0; n < candidates.size(); ++n) {
    const Candidate& c = candidates[n];
    float best = -1.0f;
    std::optional<std::size_t> best_gt;
    for (std::size_t g = 0; g < gts[c.image].size(); ++g) {
      if (matched[c.image][g]) continue;
      const float o = iou(c.det->box, gts[c.image][g]);
      if (o >= iou_threshold && o > best) {
        best = o;
        best_gt = g;
      }
    }
    if (best_gt) {
      matched[c.image][*best_gt] = true;
      tp[n] = true;
    }
  }
  return interpolated_ap(tp, num_gt);
}

ApMetrics evaluate(std::span<const std::vector<Detection>> detections,
                   std::span<const std::vector<GroundTruthBox>> ground_truth, int num_classes) {
  const auto dets = capped(detections);
  std::vector<int> classes;
  for (int c = 1; c <= num_classes; ++c) {
    const bool present = std::any_of(ground_truth.begin(), ground_truth.end(), [&](const auto& gt) {
      return std::any_of(gt.begin(), gt.end(),
                         [&](const GroundTruthBox& g) { return g.class_id == c; });
    });
    if (present) classes.push_back(c);
  }
  ApMetrics m;
  for (int t = 0; t < 10; ++t) {
    const auto threshold = static_cast<float>((50 + 5 * t) / 100.0);
    double sum = 0.0;
    for (int c : classes) sum += class_average_precision(dets, ground_truth, c, threshold);
    m.per_threshold.push_back(classes.empty() ? 0.0 : sum / static_cast<double>(classes.size()));
  }
  m.ap = std::accumulate(m.per_threshold.begin(), m.per_threshold.end(), 0.0) / 10.0;
  m.ap50 = m.per_threshold[0];
  m.ap75 = m.per_threshold[5];
  return m;
}

}  // namespace sapd
