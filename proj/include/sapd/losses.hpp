// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <span>
#include <vector>

#include "sapd/geometry.hpp"
#include "sapd/weighting.hpp"

namespace sapd {

struct FocalConfig {
  float alpha = 0.25f;
  float gamma = 2.0f;
};

template <std::floating_point T>
struct FocalResult {
  T loss = 0;
  std::vector<T> grad;  // d(loss)/d(logit), one per class
};

inline constexpr double kLogFloor = 1e-12;
inline constexpr double kIouFloor = 1e-8;

namespace detail {

// log(sigmoid(x)) without overflow, floored at log(kLogFloor).
template <std::floating_point T>
T log_sigmoid(T x) {
  const T v = x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  return std::max(v, static_cast<T>(std::log(kLogFloor)));
}

template <std::floating_point T>
T stable_sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

/// Sum of K per-class sigmoid focal terms. `target` is the 1-based class of a
/// positive anchor or 0 for background (every class treated as negative).
///   target class:  -alpha (1-p)^gamma log p
///   other classes: -(1-alpha) p^gamma log(1-p)
template <std::floating_point T>
FocalResult<T> focal_loss(std::span<const T> logits, int target, const FocalConfig& cfg) {
  const T alpha = static_cast<T>(cfg.alpha);
  const T gamma = static_cast<T>(cfg.gamma);
  FocalResult<T> out;
  out.grad.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const T x = logits[k];
    const T p = detail::stable_sigmoid(x);
    if (static_cast<int>(k) + 1 == target) {
      const T q = T(1) - p;
      const T log_p = detail::log_sigmoid(x);
      const T q_gamma = std::pow(q, gamma);
      out.loss += -alpha * q_gamma * log_p;
      out.grad[k] = alpha * q_gamma * (gamma * p * log_p - q);
    } else {
      const T log_q = detail::log_sigmoid(-x);
      const T p_gamma = std::pow(p, gamma);
      out.loss += -(T(1) - alpha) * p_gamma * log_q;
      out.grad[k] = (T(1) - alpha) * p_gamma * (p - gamma * (T(1) - p) * log_q);
    }
  }
  return out;
}

template <std::floating_point T>
struct IouLossResult {
  T loss = 0;
  std::array<T, 4> grad{};  // d(loss)/d(predicted left, top, right, bottom)
};

/// -ln IoU between the anchor-relative boxes [-l, -t, r, b] of prediction and target.
template <std::floating_point T>
IouLossResult<T> iou_loss(const std::array<T, 4>& pred, const std::array<T, 4>& target) {
  const auto [pl, pt, pr, pb] = pred;
  const auto [tl, tt, tr, tb] = target;
  const T pred_w = pl + pr, pred_h = pt + pb;
  const T target_area = (tl + tr) * (tt + tb);
  const T pred_area = pred_w * pred_h;
  const T iw = std::min(pl, tl) + std::min(pr, tr);
  const T ih = std::min(pt, tt) + std::min(pb, tb);
  const T inter = iw * ih;
  const T uni = pred_area + target_area - inter;
  const T ratio = inter / uni;

  IouLossResult<T> out;
  if (ratio < static_cast<T>(kIouFloor)) {
    out.loss = -std::log(static_cast<T>(kIouFloor));
    return out;  // flat below the floor
  }
  out.loss = -std::log(ratio);
  // dL/dx = -(1/I) dI/dx + (1/U) (dA_pred/dx - dI/dx)
  const std::array<T, 4> d_inter{pl < tl ? ih : T(0), pt < tt ? iw : T(0), pr < tr ? ih : T(0),
                                 pb < tb ? iw : T(0)};
  const std::array<T, 4> d_area{pred_h, pred_w, pred_h, pred_w};
  for (int k = 0; k < 4; ++k) {
    out.grad[k] = -d_inter[k] / inter + (d_area[k] - d_inter[k]) / uni;
  }
  return out;
}

inline std::array<float, 4> as_array(const DistanceTargets& d) {
  return {d.left, d.top, d.right, d.bottom};
}

/// Loss terms of one anchor: focal for every anchor, IoU for positives only.
struct AnchorLoss {
  float cls = 0.0f;
  float loc = 0.0f;
  bool positive = false;
  float weight = 1.0f;

  float total() const { return cls + loc; }
};

/// Per-anchor loss. `target` is present exactly for positives; `class_id`
/// is ignored for negatives (background).
AnchorLoss per_anchor_loss(std::span<const float> logits, const DistanceTargets* predicted,
                           const DistanceTargets* target, int class_id, const FocalConfig& cfg);

struct LossBreakdown {
  double total = 0.0;
  double cls_sum = 0.0;   // mode-weighted focal sum over all anchors
  double loc_sum = 0.0;   // mode-weighted IoU sum over positives
  double select_net = 0.0;
  double positive_weight_sum = 0.0;  // denominator actually used (1 when no positives)
  std::size_t num_positives = 0;
  bool no_positives = false;
};

/// Normalized detection loss plus the selection-network term:
///   (sum_a w_a^cls FL_a + w_a^loc IoU_a) / sum_{positives} w_a + lambda * select_net
/// where mode decides which of cls/loc receive the weight. Summation runs in
/// anchor order in double precision. With zero positives the denominator is 1.
LossBreakdown total_loss(std::span<const AnchorLoss> anchors, WeightMode mode,
                         double select_net_loss, double lambda);

/// Weight multiplying the focal and IoU terms of an anchor under `mode`.
inline float cls_weight(const AnchorLoss& a, WeightMode mode) {
  return (mode == WeightMode::both || mode == WeightMode::cls_only) ? a.weight : 1.0f;
}
inline float loc_weight(const AnchorLoss& a, WeightMode mode) {
  return (mode == WeightMode::both || mode == WeightMode::loc_only) ? a.weight : 1.0f;
}

}  // namespace sapd
