// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sapd/tensor.hpp"

namespace sapd {

struct ConvParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Output spatial extent of a convolution along one axis.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, ConvParams params);

/// Cross-correlation of a (C, H, W) input with an (O, C, kh, kw) kernel plus
/// a per-output-channel bias of shape (O). Result is (O, Ho, Wo).
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      ConvParams params);

struct Conv2dGrads {
  Tensor input;   // empty when not requested
  Tensor kernel;
  Tensor bias;
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                            ConvParams params, bool want_input_grad = true);

/// y = W x + b with W of shape (out, in).
Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);

struct LinearGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

LinearGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output);

void relu_inplace(Tensor& t);
/// Zeroes gradient entries whose forward output was not positive.
void relu_backward_inplace(Tensor& grad, const Tensor& output);

std::vector<float> softmax(std::span<const float> logits);
/// Gradient w.r.t. logits given the softmax output and d(loss)/d(prob).
std::vector<float> softmax_backward(std::span<const float> probs, std::span<const float> grad_probs);

float sigmoid(float x);

}  // namespace sapd
