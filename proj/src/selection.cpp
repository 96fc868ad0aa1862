// SPDX-License-Identifier: Apache-2.0
#include "sapd/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "sapd/layers.hpp"
#include "sapd/rng.hpp"

namespace sapd {

void SelectionConfig::validate(int num_levels) const {
  if (top_k < 1 || top_k > num_levels) {
    throw std::invalid_argument("selection.top_k must lie in [1, " + std::to_string(num_levels) +
                                "], got " + std::to_string(top_k));
  }
  if (roi_size < 7) throw std::invalid_argument("selection.roi_size must be >= 7");
  if (sampling_ratio < 1) throw std::invalid_argument("selection.sampling_ratio must be >= 1");
  if (width < 1) throw std::invalid_argument("selection.width must be >= 1");
  if (!(lambda >= 0.0f)) throw std::invalid_argument("selection.lambda must be >= 0");
}

std::vector<AnchorPoint> positive_anchors(const GroundTruthBox& instance, int level,
                                          int grid_width, int grid_height, float epsilon) {
  const GroundTruthBox valid = valid_box(instance, epsilon);
  const float s = static_cast<float>(PyramidSpec::stride(level));
  // Candidate index window, widened by one cell to absorb rounding; membership
  // is decided by contains() alone.
  auto window = [s](float center, float extent, int cells) {
    const int lo = static_cast<int>(std::floor((center - extent / 2.0f) / s - 0.5f)) - 1;
    const int hi = static_cast<int>(std::ceil((center + extent / 2.0f) / s - 0.5f)) + 1;
    return std::pair{std::max(lo, 0), std::min(hi, cells - 1)};
  };
  const auto [i0, i1] = window(valid.cx, valid.w, grid_width);
  const auto [j0, j1] = window(valid.cy, valid.h, grid_height);
  std::vector<AnchorPoint> out;
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      const AnchorPoint a{level, i, j};
      if (contains(valid, a.x(), a.y()) && strictly_contains(instance, a.x(), a.y())) {
        out.push_back(a);
      }
    }
  }
  return out;
}

float instance_level_loss(const GroundTruthBox& instance, int level, const LevelOutputs& outputs,
                          float epsilon, float z, const FocalConfig& focal) {
  const int gw = static_cast<int>(outputs.cls_logits.dim(2));
  const int gh = static_cast<int>(outputs.cls_logits.dim(1));
  const auto anchors = positive_anchors(instance, level, gw, gh, epsilon);
  if (anchors.empty()) return kUnreachableLevel;
  double sum = 0.0;
  for (const AnchorPoint& a : anchors) {
    const auto logits = anchor_logits(outputs.cls_logits, a.i, a.j);
    const DistanceTargets pred = predicted_distances(outputs.loc_raw, a.i, a.j);
    const DistanceTargets target = encode_targets(a, instance, z);
    sum += per_anchor_loss(logits, &pred, &target, instance.class_id, focal).total();
  }
  return static_cast<float>(sum / static_cast<double>(anchors.size()));
}

std::optional<int> hard_select(std::span<const float> level_losses) {
  std::optional<int> best;
  for (std::size_t i = 0; i < level_losses.size(); ++i) {
    if (!std::isfinite(level_losses[i])) continue;
    if (!best || level_losses[i] < level_losses[static_cast<std::size_t>(*best)]) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::vector<LevelAssignment> soft_assign(std::span<const float> level_losses,
                                         std::span<const float> level_weights, int top_k) {
  if (level_weights.size() != level_losses.size()) {
    throw std::invalid_argument("soft_assign: " + std::to_string(level_weights.size()) +
                                " weights for " + std::to_string(level_losses.size()) + " levels");
  }
  std::vector<int> order;
  for (std::size_t i = 0; i < level_losses.size(); ++i) {
    if (std::isfinite(level_losses[i])) order.push_back(static_cast<int>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return level_losses[static_cast<std::size_t>(a)] < level_losses[static_cast<std::size_t>(b)];
  });
  order.resize(std::min(order.size(), static_cast<std::size_t>(std::max(top_k, 0))));
  std::vector<LevelAssignment> out;
  for (int idx : order) out.push_back({idx, level_weights[static_cast<std::size_t>(idx)]});
  return out;
}

// --- RoIAlign ------------------------------------------------------------

namespace {

struct BilinearTap {
  std::size_t y0, x0, y1, x1;
  float w00, w01, w10, w11;
  bool valid;
};

BilinearTap bilinear_tap(float y, float x, std::size_t height, std::size_t width) {
  BilinearTap t{};
  const auto h = static_cast<float>(height);
  const auto w = static_cast<float>(width);
  if (y < -1.0f || y > h || x < -1.0f || x > w) return t;
  y = std::max(y, 0.0f);
  x = std::max(x, 0.0f);
  t.y0 = static_cast<std::size_t>(y);
  t.x0 = static_cast<std::size_t>(x);
  if (t.y0 >= height - 1) {
    t.y0 = t.y1 = height - 1;
    y = static_cast<float>(t.y0);
  } else {
    t.y1 = t.y0 + 1;
  }
  if (t.x0 >= width - 1) {
    t.x0 = t.x1 = width - 1;
    x = static_cast<float>(t.x0);
  } else {
    t.x1 = t.x0 + 1;
  }
  const float ly = y - static_cast<float>(t.y0), lx = x - static_cast<float>(t.x0);
  const float hy = 1.0f - ly, hx = 1.0f - lx;
  t.w00 = hy * hx;
  t.w01 = hy * lx;
  t.w10 = ly * hx;
  t.w11 = ly * lx;
  t.valid = true;
  return t;
}

// Visits every (bin, tap) pair of the RoI grid.
template <typename Visit>
void for_each_sample(const CornerBox& box, float stride, int roi_size, int sampling_ratio,
                     std::size_t height, std::size_t width, Visit&& visit) {
  const float start_x = box.x1 / stride - 0.5f;
  const float start_y = box.y1 / stride - 0.5f;
  const float bin_w = (box.x2 - box.x1) / stride / static_cast<float>(roi_size);
  const float bin_h = (box.y2 - box.y1) / stride / static_cast<float>(roi_size);
  const auto sr = static_cast<float>(sampling_ratio);
  for (int py = 0; py < roi_size; ++py) {
    for (int px = 0; px < roi_size; ++px) {
      for (int iy = 0; iy < sampling_ratio; ++iy) {
        const float y = start_y + static_cast<float>(py) * bin_h +
                        (static_cast<float>(iy) + 0.5f) * bin_h / sr;
        for (int ix = 0; ix < sampling_ratio; ++ix) {
          const float x = start_x + static_cast<float>(px) * bin_w +
                          (static_cast<float>(ix) + 0.5f) * bin_w / sr;
          visit(static_cast<std::size_t>(py), static_cast<std::size_t>(px),
                bilinear_tap(y, x, height, width));
        }
      }
    }
  }
}

}  // namespace

Tensor roi_align(const Tensor& features, const CornerBox& box, float stride, int roi_size,
                 int sampling_ratio) {
  if (features.rank() != 3) {
    throw std::invalid_argument("roi_align: features must be (C,H,W), got " +
                                shape_string(features.shape()));
  }
  const std::size_t channels = features.dim(0), height = features.dim(1), width = features.dim(2);
  const auto r = static_cast<std::size_t>(roi_size);
  Tensor out({channels, r, r});
  const float norm = 1.0f / static_cast<float>(sampling_ratio * sampling_ratio);
  for_each_sample(box, stride, roi_size, sampling_ratio, height, width,
                  [&](std::size_t py, std::size_t px, const BilinearTap& t) {
                    if (!t.valid) return;
                    for (std::size_t c = 0; c < channels; ++c) {
                      const float v = t.w00 * features.at(c, t.y0, t.x0) +
                                      t.w01 * features.at(c, t.y0, t.x1) +
                                      t.w10 * features.at(c, t.y1, t.x0) +
                                      t.w11 * features.at(c, t.y1, t.x1);
                      out.at(c, py, px) += v * norm;
                    }
                  });
  return out;
}

void roi_align_backward(const Tensor& grad_output, const CornerBox& box, float stride,
                        int roi_size, int sampling_ratio, Tensor& grad_features) {
  const std::size_t channels = grad_features.dim(0);
  const float norm = 1.0f / static_cast<float>(sampling_ratio * sampling_ratio);
  for_each_sample(box, stride, roi_size, sampling_ratio, grad_features.dim(1),
                  grad_features.dim(2), [&](std::size_t py, std::size_t px, const BilinearTap& t) {
                    if (!t.valid) return;
                    for (std::size_t c = 0; c < channels; ++c) {
                      const float g = grad_output.at(c, py, px) * norm;
                      grad_features.at(c, t.y0, t.x0) += t.w00 * g;
                      grad_features.at(c, t.y0, t.x1) += t.w01 * g;
                      grad_features.at(c, t.y1, t.x0) += t.w10 * g;
                      grad_features.at(c, t.y1, t.x1) += t.w11 * g;
                    }
                  });
}

Tensor extract_instance_feature(std::span<const Tensor> pyramid_features,
                                const PyramidSpec& pyramid, const CornerBox& box, int roi_size,
                                int sampling_ratio) {
  if (pyramid_features.size() != static_cast<std::size_t>(pyramid.num_levels())) {
    throw std::invalid_argument("extract_instance_feature: expected one feature map per level");
  }
  const auto r = static_cast<std::size_t>(roi_size);
  std::size_t total_channels = 0;
  for (const Tensor& f : pyramid_features) total_channels += f.dim(0);
  Tensor block({total_channels, r, r});
  std::size_t offset = 0;
  for (int idx = 0; idx < pyramid.num_levels(); ++idx) {
    const Tensor pooled =
        roi_align(pyramid_features[static_cast<std::size_t>(idx)], box,
                  static_cast<float>(PyramidSpec::stride(pyramid.level_at(idx))), roi_size,
                  sampling_ratio);
    std::copy(pooled.values().begin(), pooled.values().end(), block.data() + offset);
    offset += pooled.size();
  }
  return block;
}

void extract_instance_feature_backward(const Tensor& grad_block, const PyramidSpec& pyramid,
                                       const CornerBox& box, int roi_size, int sampling_ratio,
                                       std::span<Tensor> grad_features) {
  const auto r = static_cast<std::size_t>(roi_size);
  std::size_t offset = 0;
  for (int idx = 0; idx < pyramid.num_levels(); ++idx) {
    Tensor& g = grad_features[static_cast<std::size_t>(idx)];
    const std::size_t n = g.dim(0) * r * r;
    Tensor slice({g.dim(0), r, r},
                 std::vector<float>(grad_block.data() + offset, grad_block.data() + offset + n));
    roi_align_backward(slice, box, static_cast<float>(PyramidSpec::stride(pyramid.level_at(idx))),
                       roi_size, sampling_ratio, g);
    offset += n;
  }
}

// --- Feature selection network --------------------------------------------

namespace {
constexpr ConvParams kValidConv{1, 0};
}

SelectNet::SelectNet(int in_channels, int width, int roi_size, int num_levels)
    : in_channels_(in_channels), width_(width), roi_size_(roi_size), num_levels_(num_levels) {
  if (roi_size < 7) throw std::invalid_argument("SelectNet: roi_size must be >= 7");
  const auto w = static_cast<std::size_t>(width);
  std::size_t cin = static_cast<std::size_t>(in_channels);
  for (int i = 0; i < 3; ++i) {
    conv_w_[i] = Parameter("select.conv" + std::to_string(i + 1) + ".weight", Tensor({w, cin, 3, 3}));
    conv_b_[i] = Parameter("select.conv" + std::to_string(i + 1) + ".bias", Tensor({w}));
    cin = w;
  }
  const auto spatial = static_cast<std::size_t>(roi_size - 6);
  fc_w_ = Parameter("select.fc.weight",
                    Tensor({static_cast<std::size_t>(num_levels), w * spatial * spatial}));
  fc_b_ = Parameter("select.fc.bias", Tensor({static_cast<std::size_t>(num_levels)}));
}

void SelectNet::initialize(float sigma, std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (int i = 0; i < 3; ++i) {
    conv_w_[i].value = gaussian_init(conv_w_[i].value.shape(), sigma, rng);
    conv_b_[i].value.set_zero();
  }
  fc_w_.value = gaussian_init(fc_w_.value.shape(), sigma, rng);
  fc_b_.value.set_zero();
}

SelectNet::Activations SelectNet::forward(const Tensor& block) const {
  const auto r = static_cast<std::size_t>(roi_size_);
  if (block.shape() != Shape{static_cast<std::size_t>(in_channels_), r, r}) {
    throw std::invalid_argument("SelectNet: input " + shape_string(block.shape()) + " expected " +
                                shape_string({static_cast<std::size_t>(in_channels_), r, r}));
  }
  Activations acts;
  acts.input = block;
  const Tensor* x = &acts.input;
  for (int i = 0; i < 3; ++i) {
    acts.conv[i] = conv2d_forward(*x, conv_w_[i].value, conv_b_[i].value, kValidConv);
    relu_inplace(acts.conv[i]);
    x = &acts.conv[i];
  }
  acts.logits = linear_forward(*x, fc_w_.value, fc_b_.value);
  acts.probs = softmax(acts.logits.values());
  return acts;
}

Tensor SelectNet::backward(const Activations& acts, std::span<const float> grad_logits) {
  Tensor g({grad_logits.size()}, std::vector<float>(grad_logits.begin(), grad_logits.end()));
  LinearGrads fc = linear_backward(acts.conv[2], fc_w_.value, g);
  fc_w_.grad += fc.weight;
  fc_b_.grad += fc.bias;
  Tensor grad = fc.input.reshaped(acts.conv[2].shape());
  for (int i = 2; i >= 0; --i) {
    relu_backward_inplace(grad, acts.conv[i]);
    const Tensor& in = i == 0 ? acts.input : acts.conv[i - 1];
    Conv2dGrads cg = conv2d_backward(in, conv_w_[i].value, grad, kValidConv);
    conv_w_[i].grad += cg.kernel;
    conv_b_[i].grad += cg.bias;
    grad = std::move(cg.input);
  }
  return grad;
}

std::vector<Parameter*> SelectNet::parameters() {
  return {&conv_w_[0], &conv_b_[0], &conv_w_[1], &conv_b_[1],
          &conv_w_[2], &conv_b_[2], &fc_w_,      &fc_b_};
}

std::vector<const Parameter*> SelectNet::parameters() const {
  return {&conv_w_[0], &conv_b_[0], &conv_w_[1], &conv_b_[1],
          &conv_w_[2], &conv_b_[2], &fc_w_,      &fc_b_};
}

SelectLoss select_net_loss(std::span<const float> probs, int target_level_index) {
  if (target_level_index < 0 || static_cast<std::size_t>(target_level_index) >= probs.size()) {
    throw std::invalid_argument("select_net_loss: level index " +
                                std::to_string(target_level_index) + " out of range");
  }
  SelectLoss out;
  const auto t = static_cast<std::size_t>(target_level_index);
  out.loss = static_cast<float>(-std::log(std::max(static_cast<double>(probs[t]), kLogFloor)));
  out.grad_logits.assign(probs.begin(), probs.end());
  out.grad_logits[t] -= 1.0f;
  return out;
}

}  // namespace sapd
