// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "sapd/geometry.hpp"
#include "sapd/head_outputs.hpp"
#include "sapd/losses.hpp"
#include "sapd/optimizer.hpp"

namespace sapd {

inline constexpr float kUnreachableLevel = std::numeric_limits<float>::infinity();

struct SelectionConfig {
  int top_k = 3;
  float lambda = 0.1f;
  int roi_size = 7;
  int sampling_ratio = 2;
  int width = 32;
  /// Let the selection loss back-propagate into the pyramid features.
  bool couple_features = false;

  void validate(int num_levels) const;
};

/// One level chosen for an instance, with its soft weight (absent for hard selection).
struct LevelAssignment {
  int level_index = 0;
  std::optional<float> weight;
};

/// Mean unweighted (focal + IoU) loss over the anchors inside the instance's
/// valid box on `level`. Returns kUnreachableLevel if no anchor qualifies.
float instance_level_loss(const GroundTruthBox& instance, int level, const LevelOutputs& outputs,
                          float epsilon, float z, const FocalConfig& focal);

/// Anchors of `level` that are positive for the instance: inside its valid box
/// and strictly inside the box itself.
std::vector<AnchorPoint> positive_anchors(const GroundTruthBox& instance, int level,
                                          int grid_width, int grid_height, float epsilon);

/// Index of the smallest finite loss; ties go to the lower level. nullopt when
/// every entry is infinite.
std::optional<int> hard_select(std::span<const float> level_losses);

/// The min(k, #finite) levels of smallest loss, ascending by loss (ties to the
/// lower level), each carrying its weight from `level_weights` unrenormalized.
std::vector<LevelAssignment> soft_assign(std::span<const float> level_losses,
                                         std::span<const float> level_weights, int top_k);

// --- RoIAlign ------------------------------------------------------------

/// Bilinear RoIAlign of a (C, H, W) feature map with the given stride.
/// The box is in image coordinates; feature cell (i, j) sits at image
/// location stride * (i + 0.5). Output is (C, roi_size, roi_size); each bin
/// averages sampling_ratio^2 samples.
Tensor roi_align(const Tensor& features, const CornerBox& box, float stride, int roi_size,
                 int sampling_ratio);

/// Adds d(loss)/d(features) into `grad_features` given d(loss)/d(output).
void roi_align_backward(const Tensor& grad_output, const CornerBox& box, float stride,
                        int roi_size, int sampling_ratio, Tensor& grad_features);

/// RoIAlign on every level followed by channel concatenation:
/// (L * C, roi_size, roi_size).
Tensor extract_instance_feature(std::span<const Tensor> pyramid_features,
                                const PyramidSpec& pyramid, const CornerBox& box, int roi_size,
                                int sampling_ratio);

/// Splits a gradient w.r.t. the concatenated block back onto each level.
void extract_instance_feature_backward(const Tensor& grad_block, const PyramidSpec& pyramid,
                                       const CornerBox& box, int roi_size, int sampling_ratio,
                                       std::span<Tensor> grad_features);

// --- Feature selection network --------------------------------------------

/// Three unpadded 3x3 conv + ReLU layers followed by a fully-connected layer
/// and a softmax over pyramid levels.
class SelectNet {
 public:
  SelectNet(int in_channels, int width, int roi_size, int num_levels);

  /// Gaussian weights (sigma) and zero biases.
  void initialize(float sigma, std::uint64_t seed);

  struct Activations {
    Tensor input;
    Tensor conv[3];  // post-ReLU
    Tensor logits;
    std::vector<float> probs;
  };

  Activations forward(const Tensor& block) const;

  /// Accumulates parameter gradients for d(loss)/d(logits); returns the
  /// gradient w.r.t. the input block.
  Tensor backward(const Activations& acts, std::span<const float> grad_logits);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  int in_channels() const { return in_channels_; }
  int num_levels() const { return num_levels_; }
  int roi_size() const { return roi_size_; }

 private:
  int in_channels_;
  int width_;
  int roi_size_;
  int num_levels_;
  Parameter conv_w_[3];
  Parameter conv_b_[3];
  Parameter fc_w_;
  Parameter fc_b_;
};

struct SelectLoss {
  float loss = 0.0f;
  std::vector<float> grad_logits;  // softmax + cross-entropy: p - onehot
};

/// -log(probs[target]) with the probability floored at 1e-12.
SelectLoss select_net_loss(std::span<const float> probs, int target_level_index);

}  // namespace sapd
