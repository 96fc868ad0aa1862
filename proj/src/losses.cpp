// SPDX-License-Identifier: Apache-2.0
#include "sapd/losses.hpp"

#include <stdexcept>

namespace sapd {

AnchorLoss per_anchor_loss(std::span<const float> logits, const DistanceTargets* predicted,
                           const DistanceTargets* target, int class_id, const FocalConfig& cfg) {
  if ((predicted == nullptr) != (target == nullptr)) {
    throw std::invalid_argument("per_anchor_loss: prediction and target must both be given");
  }
  AnchorLoss out;
  out.positive = target != nullptr;
  out.cls = focal_loss<float>(logits, out.positive ? class_id : 0, cfg).loss;
  if (out.positive) out.loc = iou_loss<float>(as_array(*predicted), as_array(*target)).loss;
  return out;
}

LossBreakdown total_loss(std::span<const AnchorLoss> anchors, WeightMode mode,
                         double select_net_loss, double lambda) {
  LossBreakdown out;
  double numerator = 0.0;
  for (const AnchorLoss& a : anchors) {
    const double wc = cls_weight(a, mode);
    const double cls = wc * static_cast<double>(a.cls);
    out.cls_sum += cls;
    if (a.positive) {
      const double loc = static_cast<double>(loc_weight(a, mode)) * static_cast<double>(a.loc);
      out.loc_sum += loc;
      numerator += cls + loc;
      out.positive_weight_sum += mode == WeightMode::off ? 1.0 : static_cast<double>(a.weight);
      ++out.num_positives;
    } else {
      numerator += cls;
    }
  }
  if (out.num_positives == 0 || !(out.positive_weight_sum > 0.0)) {
    out.no_positives = true;
    out.positive_weight_sum = 1.0;
  }
  out.select_net = select_net_loss;
  out.total = numerator / out.positive_weight_sum + lambda * select_net_loss;
  return out;
}

}  // namespace sapd
