// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sapd/config.hpp"
#include "sapd/head_outputs.hpp"
#include "sapd/layers.hpp"
#include "sapd/optimizer.hpp"

namespace sapd {

struct ConvLayer {
  Parameter weight;
  Parameter bias;
  ConvParams params;
  bool relu = true;

  Tensor forward(const Tensor& input) const;
  /// Accumulates parameter gradients; `grad_output` is w.r.t. the layer's
  /// (post-activation) output and is consumed.
  Tensor backward(const Tensor& input, const Tensor& output, Tensor grad_output,
                  bool want_input_grad);
};

struct DetectorConfig {
  PyramidSpec pyramid;
  int num_classes = 3;
  ModelSettings model;
};

/// Strided conv backbone whose stage outputs form the feature pyramid, plus
/// classification and localization subnets shared across levels.
class ToyDetector {
 public:
  explicit ToyDetector(DetectorConfig config);

  /// Backbone: He-normal weights. Heads: Gaussian(sigma) weights, the
  /// classification output bias set from the prior and the localization
  /// output bias set to loc_bias.
  void initialize(std::uint64_t seed);

  struct ForwardPass {
    Tensor image;
    std::vector<Tensor> backbone;  // post-ReLU output of every backbone layer
    std::vector<std::vector<Tensor>> cls_hidden;  // [level][layer]
    std::vector<std::vector<Tensor>> loc_hidden;
    PyramidOutputs outputs;

    const Tensor& feature(int level_index) const;
    std::vector<std::size_t> feature_layers;  // backbone layer index per level
  };

  ForwardPass forward(const Tensor& image) const;

  /// Back-propagates d(loss)/d(head outputs) per level. `feature_grads`, when
  /// non-empty, adds extra gradient directly on the pyramid features.
  void backward(const ForwardPass& pass, const PyramidOutputs& output_grads,
                std::span<const Tensor> feature_grads = {});

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  const DetectorConfig& config() const { return config_; }
  int feature_channels() const { return config_.model.width; }

 private:
  DetectorConfig config_;
  std::vector<ConvLayer> backbone_;
  std::vector<std::size_t> level_taps_;
  std::vector<ConvLayer> cls_head_;
  std::vector<ConvLayer> loc_head_;
};

/// Checkpoint: every detector parameter followed by every selection-network
/// parameter, each as one tensor record, in parameters() order.
void save_checkpoint(const std::filesystem::path& path, const std::vector<const Parameter*>& params);
/// Throws std::runtime_error when the file does not match the parameter shapes.
void load_checkpoint(const std::filesystem::path& path, const std::vector<Parameter*>& params);

}  // namespace sapd
