// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>

#include "sapd/tensor.hpp"

namespace sapd {

/// A trainable tensor with its gradient accumulator and momentum buffer.
struct Parameter {
  Parameter() = default;
  Parameter(std::string param_name, Tensor initial)
      : name(std::move(param_name)),
        value(std::move(initial)),
        grad(value.shape()),
        velocity(value.shape()) {}

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor velocity;
};

struct SgdConfig {
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
};

/// Momentum SGD:  v <- mu * v + (g + wd * theta);  theta <- theta - lr * v.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(SgdConfig config) : config_(config) {}

  void step(std::span<Parameter* const> params, float learning_rate) const;
  static void zero_grad(std::span<Parameter* const> params);

  const SgdConfig& config() const { return config_; }

 private:
  SgdConfig config_;
};

}  // namespace sapd
