// SPDX-License-Identifier: Apache-2.0
#include "sapd/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sapd {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvShape {
  std::size_t channels, height, width;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t out_h, out_w;
};

ConvShape check_conv(const Tensor& input, const Tensor& kernel, ConvParams params) {
  if (input.rank() != 3) {
    throw std::invalid_argument("conv2d: input must be (C,H,W), got " + shape_string(input.shape()));
  }
  if (kernel.rank() != 4) {
    throw std::invalid_argument("conv2d: kernel must be (O,C,kh,kw), got " +
                                shape_string(kernel.shape()));
  }
  if (kernel.dim(1) != input.dim(0)) {
    throw std::invalid_argument("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                                " input channels, input has " + std::to_string(input.dim(0)));
  }
  if (params.stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  ConvShape s{input.dim(0), input.dim(1), input.dim(2), kernel.dim(0), kernel.dim(2), kernel.dim(3),
              0, 0};
  if (s.height + 2 * params.padding < s.kernel_h || s.width + 2 * params.padding < s.kernel_w) {
    throw std::invalid_argument("conv2d: kernel " + shape_string(kernel.shape()) +
                                " larger than padded input " + shape_string(input.shape()));
  }
  s.out_h = conv_output_extent(s.height, s.kernel_h, params);
  s.out_w = conv_output_extent(s.width, s.kernel_w, params);
  return s;
}

// Columns matrix of shape (C*kh*kw, Ho*Wo).
RowMatrix im2col(const Tensor& input, const ConvShape& s, ConvParams p) {
  RowMatrix cols(s.channels * s.kernel_h * s.kernel_w, s.out_h * s.out_w);
  const float* src = input.data();
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
        float* row = cols.data() + ((c * s.kernel_h + ky) * s.kernel_w + kx) * cols.cols();
        for (std::size_t oy = 0; oy < s.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * p.stride + ky) -
                          static_cast<std::ptrdiff_t>(p.padding);
          float* dst = row + oy * s.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.height)) {
            std::fill(dst, dst + s.out_w, 0.0f);
            continue;
          }
          const float* line = src + (c * s.height + static_cast<std::size_t>(iy)) * s.width;
          for (std::size_t ox = 0; ox < s.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * p.stride + kx) -
                            static_cast<std::ptrdiff_t>(p.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.width))
                          ? 0.0f
                          : line[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
  return cols;
}

void col2im(const RowMatrix& cols, const ConvShape& s, ConvParams p, Tensor& out) {
  float* dst = out.data();
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
        const float* row = cols.data() + ((c * s.kernel_h + ky) * s.kernel_w + kx) * cols.cols();
        for (std::size_t oy = 0; oy < s.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * p.stride + ky) -
                          static_cast<std::ptrdiff_t>(p.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.height)) continue;
          float* line = dst + (c * s.height + static_cast<std::size_t>(iy)) * s.width;
          const float* srow = row + oy * s.out_w;
          for (std::size_t ox = 0; ox < s.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * p.stride + kx) -
                            static_cast<std::ptrdiff_t>(p.padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.width)) continue;
            line[static_cast<std::size_t>(ix)] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, ConvParams params) {
  return (input + 2 * params.padding - kernel) / params.stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      ConvParams params) {
  const ConvShape s = check_conv(input, kernel, params);
  if (bias.size() != s.out_channels) {
    throw std::invalid_argument("conv2d: bias " + shape_string(bias.shape()) + " does not match " +
                                std::to_string(s.out_channels) + " output channels");
  }
  const RowMatrix cols = im2col(input, s, params);
  ConstMatrixMap k(kernel.data(), static_cast<Eigen::Index>(s.out_channels),
                   static_cast<Eigen::Index>(s.channels * s.kernel_h * s.kernel_w));
  Tensor out({s.out_channels, s.out_h, s.out_w});
  MatrixMap o(out.data(), static_cast<Eigen::Index>(s.out_channels),
              static_cast<Eigen::Index>(s.out_h * s.out_w));
  o.noalias() = k * cols;
  for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
    o.row(static_cast<Eigen::Index>(oc)).array() += bias[oc];
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_output,
                            ConvParams params, bool want_input_grad) {
  const ConvShape s = check_conv(input, kernel, params);
  if (grad_output.shape() != Shape{s.out_channels, s.out_h, s.out_w}) {
    throw std::invalid_argument("conv2d_backward: grad_output " +
                                shape_string(grad_output.shape()) + " expected " +
                                shape_string({s.out_channels, s.out_h, s.out_w}));
  }
  const auto ckk = static_cast<Eigen::Index>(s.channels * s.kernel_h * s.kernel_w);
  const auto positions = static_cast<Eigen::Index>(s.out_h * s.out_w);
  const auto oc = static_cast<Eigen::Index>(s.out_channels);

  const RowMatrix cols = im2col(input, s, params);
  ConstMatrixMap g(grad_output.data(), oc, positions);
  ConstMatrixMap k(kernel.data(), oc, ckk);

  Conv2dGrads grads;
  grads.kernel = Tensor(kernel.shape());
  MatrixMap gk(grads.kernel.data(), oc, ckk);
  gk.noalias() = g * cols.transpose();

  grads.bias = Tensor({s.out_channels});
  for (Eigen::Index o = 0; o < oc; ++o) {
    double acc = 0.0;
    const float* row = grad_output.data() + o * positions;
    for (Eigen::Index i = 0; i < positions; ++i) acc += row[i];
    grads.bias[static_cast<std::size_t>(o)] = static_cast<float>(acc);
  }

  if (want_input_grad) {
    RowMatrix gcols(ckk, positions);
    gcols.noalias() = k.transpose() * g;
    grads.input = Tensor(input.shape());
    col2im(gcols, s, params, grads.input);
  }
  return grads;
}

Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || weight.dim(1) != input.size() || bias.size() != weight.dim(0)) {
    throw std::invalid_argument("linear: weight " + shape_string(weight.shape()) + ", bias " +
                                shape_string(bias.shape()) + " incompatible with input of " +
                                std::to_string(input.size()) + " values");
  }
  const std::size_t out_n = weight.dim(0);
  const std::size_t in_n = weight.dim(1);
  Tensor out({out_n});
  for (std::size_t o = 0; o < out_n; ++o) {
    float acc = bias[o];
    const float* row = weight.data() + o * in_n;
    for (std::size_t i = 0; i < in_n; ++i) acc += row[i] * input[i];
    out[o] = acc;
  }
  return out;
}

LinearGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output) {
  const std::size_t out_n = weight.dim(0);
  const std::size_t in_n = weight.dim(1);
  if (grad_output.size() != out_n || input.size() != in_n) {
    throw std::invalid_argument("linear_backward: shape mismatch with weight " +
                                shape_string(weight.shape()));
  }
  LinearGrads g{Tensor(input.shape()), Tensor(weight.shape()), Tensor({out_n})};
  for (std::size_t o = 0; o < out_n; ++o) {
    const float go = grad_output[o];
    g.bias[o] = go;
    const float* row = weight.data() + o * in_n;
    float* grow = g.weight.data() + o * in_n;
    for (std::size_t i = 0; i < in_n; ++i) {
      grow[i] = go * input[i];
      g.input[i] += go * row[i];
    }
  }
  return g;
}

void relu_inplace(Tensor& t) {
  for (float& v : t.values()) v = v > 0.0f ? v : 0.0f;
}

void relu_backward_inplace(Tensor& grad, const Tensor& output) {
  require_same_shape(grad, output, "relu_backward");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(output[i] > 0.0f)) grad[i] = 0.0f;
  }
}

std::vector<float> softmax(std::span<const float> logits) {
  std::vector<float> out(logits.size());
  if (logits.empty()) return out;
  const float peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (float& v : out) v = static_cast<float>(v / total);
  return out;
}

std::vector<float> softmax_backward(std::span<const float> probs,
                                    std::span<const float> grad_probs) {
  double dot = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * grad_probs[i];
  std::vector<float> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out[i] = static_cast<float>(probs[i] * (grad_probs[i] - dot));
  }
  return out;
}

float sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

}  // namespace sapd
