// SPDX-License-Identifier: Apache-2.0
#include "sapd/optimizer.hpp"

namespace sapd {

void SgdOptimizer::step(std::span<Parameter* const> params, float learning_rate) const {
  for (Parameter* p : params) {
    float* theta = p->value.data();
    const float* g = p->grad.data();
    float* v = p->velocity.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      v[i] = config_.momentum * v[i] + (g[i] + config_.weight_decay * theta[i]);
      theta[i] -= learning_rate * v[i];
    }
  }
}

void SgdOptimizer::zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->grad.set_zero();
}

}  // namespace sapd
