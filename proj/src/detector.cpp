// SPDX-License-Identifier: Apache-2.0
#include "sapd/detector.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "sapd/rng.hpp"
#include "sapd/tensor_io.hpp"

namespace sapd {
namespace {

ConvLayer make_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t stride,
                    bool relu) {
  ConvLayer layer;
  layer.weight = Parameter(name + ".weight", Tensor({out, in, 3, 3}));
  layer.bias = Parameter(name + ".bias", Tensor({out}));
  layer.params = {stride, 1};
  layer.relu = relu;
  return layer;
}

}  // namespace

Tensor ConvLayer::forward(const Tensor& input) const {
  Tensor out = conv2d_forward(input, weight.value, bias.value, params);
  if (relu) relu_inplace(out);
  return out;
}

Tensor ConvLayer::backward(const Tensor& input, const Tensor& output, Tensor grad_output,
                           bool want_input_grad) {
  if (relu) relu_backward_inplace(grad_output, output);
  Conv2dGrads g = conv2d_backward(input, weight.value, grad_output, params, want_input_grad);
  weight.grad += g.kernel;
  bias.grad += g.bias;
  return std::move(g.input);
}

ToyDetector::ToyDetector(DetectorConfig config) : config_(std::move(config)) {
  config_.pyramid.validate();
  const auto width = static_cast<std::size_t>(config_.model.width);
  std::size_t channels = 3;
  for (int stage = 1; stage <= config_.pyramid.max_level; ++stage) {
    const std::size_t out = stage == 1 ? static_cast<std::size_t>(config_.model.stem_width) : width;
    const std::string name = "backbone.stage" + std::to_string(stage);
    backbone_.push_back(make_conv(name + ".down", channels, out, 2, true));
    if (stage >= 2) backbone_.push_back(make_conv(name + ".conv", out, out, 1, true));
    channels = out;
    if (stage >= config_.pyramid.min_level) level_taps_.push_back(backbone_.size() - 1);
  }
  if (config_.pyramid.min_level < 2) {
    throw std::invalid_argument("ToyDetector: pyramid.min_level must be >= 2");
  }
  for (int i = 0; i < config_.model.head_convs; ++i) {
    cls_head_.push_back(make_conv("cls_head.conv" + std::to_string(i), width, width, 1, true));
    loc_head_.push_back(make_conv("loc_head.conv" + std::to_string(i), width, width, 1, true));
  }
  cls_head_.push_back(make_conv("cls_head.out", width,
                                static_cast<std::size_t>(config_.num_classes), 1, false));
  loc_head_.push_back(make_conv("loc_head.out", width, 4, 1, false));
}

void ToyDetector::initialize(std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (ConvLayer& layer : backbone_) {
    const Shape& s = layer.weight.value.shape();
    const auto fan_in = static_cast<float>(s[1] * s[2] * s[3]);
    layer.weight.value = gaussian_init(s, std::sqrt(2.0f / fan_in), rng);
    layer.bias.value.set_zero();
  }
  for (auto* head : {&cls_head_, &loc_head_}) {
    for (ConvLayer& layer : *head) {
      layer.weight.value = gaussian_init(layer.weight.value.shape(), config_.model.init_sigma, rng);
      layer.bias.value.set_zero();
    }
  }
  cls_head_.back().bias.value.fill(prior_bias(config_.model.prior));
  loc_head_.back().bias.value.fill(config_.model.loc_bias);
}

const Tensor& ToyDetector::ForwardPass::feature(int level_index) const {
  return backbone[feature_layers[static_cast<std::size_t>(level_index)]];
}

ToyDetector::ForwardPass ToyDetector::forward(const Tensor& image) const {
  ForwardPass pass;
  pass.image = image;
  pass.feature_layers = level_taps_;
  const Tensor* x = &pass.image;
  pass.backbone.reserve(backbone_.size());
  for (const ConvLayer& layer : backbone_) {
    pass.backbone.push_back(layer.forward(*x));
    x = &pass.backbone.back();
  }
  const std::size_t levels = level_taps_.size();
  pass.cls_hidden.resize(levels);
  pass.loc_hidden.resize(levels);
  pass.outputs.resize(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    const Tensor& feat = pass.backbone[level_taps_[l]];
    auto run_head = [&](const std::vector<ConvLayer>& head, std::vector<Tensor>& hidden) {
      const Tensor* h = &feat;
      for (std::size_t i = 0; i + 1 < head.size(); ++i) {
        hidden.push_back(head[i].forward(*h));
        h = &hidden.back();
      }
      return head.back().forward(*h);
    };
    pass.cls_hidden[l].reserve(cls_head_.size());
    pass.loc_hidden[l].reserve(loc_head_.size());
    pass.outputs[l].cls_logits = run_head(cls_head_, pass.cls_hidden[l]);
    pass.outputs[l].loc_raw = run_head(loc_head_, pass.loc_hidden[l]);
  }
  return pass;
}

void ToyDetector::backward(const ForwardPass& pass, const PyramidOutputs& output_grads,
                           std::span<const Tensor> feature_grads) {
  const std::size_t levels = level_taps_.size();
  if (output_grads.size() != levels) {
    throw std::invalid_argument("ToyDetector::backward: expected one gradient per level");
  }
  std::vector<Tensor> layer_grads(backbone_.size());
  auto add_grad = [&](std::size_t layer, const Tensor& g) {
    if (layer_grads[layer].empty()) {
      layer_grads[layer] = g;
    } else {
      layer_grads[layer] += g;
    }
  };

  for (std::size_t l = 0; l < levels; ++l) {
    const Tensor& feat = pass.backbone[level_taps_[l]];
    auto head_backward = [&](std::vector<ConvLayer>& head, const std::vector<Tensor>& hidden,
                             const Tensor& head_out, const Tensor& grad) {
      Tensor g = grad;
      for (std::size_t i = head.size(); i-- > 0;) {
        const Tensor& in = i == 0 ? feat : hidden[i - 1];
        const Tensor& out = i + 1 == head.size() ? head_out : hidden[i];
        g = head[i].backward(in, out, std::move(g), true);
      }
      return g;
    };
    add_grad(level_taps_[l], head_backward(cls_head_, pass.cls_hidden[l], pass.outputs[l].cls_logits,
                                           output_grads[l].cls_logits));
    add_grad(level_taps_[l], head_backward(loc_head_, pass.loc_hidden[l], pass.outputs[l].loc_raw,
                                           output_grads[l].loc_raw));
    if (!feature_grads.empty()) add_grad(level_taps_[l], feature_grads[l]);
  }

  for (std::size_t i = backbone_.size(); i-- > 0;) {
    if (layer_grads[i].empty()) continue;
    const Tensor& in = i == 0 ? pass.image : pass.backbone[i - 1];
    Tensor g = backbone_[i].backward(in, pass.backbone[i], std::move(layer_grads[i]), i > 0);
    if (i > 0) add_grad(i - 1, g);
  }
}

std::vector<Parameter*> ToyDetector::parameters() {
  std::vector<Parameter*> out;
  for (auto* group : {&backbone_, &cls_head_, &loc_head_}) {
    for (ConvLayer& layer : *group) {
      out.push_back(&layer.weight);
      out.push_back(&layer.bias);
    }
  }
  return out;
}

std::vector<const Parameter*> ToyDetector::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto* group : {&backbone_, &cls_head_, &loc_head_}) {
    for (const ConvLayer& layer : *group) {
      out.push_back(&layer.weight);
      out.push_back(&layer.bias);
    }
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<const Parameter*>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  for (const Parameter* p : params) write_tensor(out, p->value);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, const std::vector<Parameter*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  for (Parameter* p : params) {
    Tensor t = read_tensor(in);
    if (t.shape() != p->value.shape()) {
      throw std::runtime_error("checkpoint " + path.string() + ": " + p->name + " has shape " +
                               shape_string(t.shape()) + ", config expects " +
                               shape_string(p->value.shape()));
    }
    p->value = std::move(t);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("checkpoint " + path.string() + " has trailing data");
  }
}

}  // namespace sapd
