// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sapd/finite_difference.hpp"
#include "sapd/layers.hpp"
#include "sapd/optimizer.hpp"
#include "sapd/rng.hpp"
#include "sapd/tensor_io.hpp"
#include "test_support.hpp"

namespace sapd {
namespace {

using testing::as_double;
using testing::dot;
using testing::random_tensor;

TEST(Tensor, ShapeAndFill) {
  Tensor t({2, 3, 4}, 1.5f);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.at(1, 2, 3), 1.5f);
  t.at(1, 2, 3) = 7.0f;
  EXPECT_EQ(t[23], 7.0f);
  EXPECT_THROW(t.reshaped({5, 5}), std::invalid_argument);
  EXPECT_EQ(t.reshaped({24}).shape(), Shape{24});
}

TEST(Tensor, CopiesDoNotAlias) {
  Tensor a({3}, 1.0f);
  Tensor b = a;
  b[0] = 5.0f;
  EXPECT_EQ(a[0], 1.0f);
}

TEST(Tensor, MismatchedAddNamesShapes) {
  Tensor a({2, 2});
  Tensor b({4});
  try {
    a += b;
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("2x2"), std::string::npos);
  }
}

TEST(Conv2d, IdentityKernel) {
  SplitMix64 rng(1);
  const Tensor x = random_tensor({3, 5, 6}, rng);
  Tensor k({3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) k[c * 3 + c] = 1.0f;
  const Tensor y = conv2d_forward(x, k, Tensor({3}), {});
  EXPECT_EQ(y, x);
}

TEST(Conv2d, OnesKernelOnConstantInput) {
  const Tensor x({1, 6, 6}, 2.5f);
  const Tensor k({1, 1, 3, 3}, 1.0f);
  const Tensor y = conv2d_forward(x, k, Tensor({1}), {1, 1});
  ASSERT_EQ(y.shape(), (Shape{1, 6, 6}));
  for (std::size_t r = 1; r < 5; ++r) {
    for (std::size_t c = 1; c < 5; ++c) EXPECT_FLOAT_EQ(y.at(0, r, c), 22.5f);
  }
  EXPECT_FLOAT_EQ(y.at(0, 0, 0), 10.0f);  // corner sees 4 cells
}

TEST(Conv2d, OutputExtent) {
  EXPECT_EQ(conv_output_extent(7, 3, {1, 0}), 5u);
  EXPECT_EQ(conv_output_extent(64, 3, {2, 1}), 32u);
  EXPECT_EQ(conv_output_extent(5, 3, {2, 1}), 3u);
}

TEST(Conv2d, ShapeMismatchReportsDimensions) {
  try {
    conv2d_forward(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1}), {});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

struct ConvCase {
  std::size_t stride, padding;
};

class ConvGradient : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvGradient, MatchesFiniteDifferences) {
  const ConvParams params{GetParam().stride, GetParam().padding};
  SplitMix64 rng(11 + params.stride * 7 + params.padding);
  Tensor x = random_tensor({2, 7, 6}, rng);
  Tensor k = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  const Tensor y0 = conv2d_forward(x, k, b, params);
  const Tensor probe = random_tensor(y0.shape(), rng);
  auto objective = [&] { return dot(conv2d_forward(x, k, b, params), probe); };
  const Conv2dGrads g = conv2d_backward(x, k, probe, params);
  EXPECT_LT(relative_error(central_difference(x.values(), 1e-2f, objective), as_double(g.input.values())), 1e-3);
  EXPECT_LT(relative_error(central_difference(k.values(), 1e-2f, objective), as_double(g.kernel.values())), 1e-3);
  EXPECT_LT(relative_error(central_difference(b.values(), 1e-2f, objective), as_double(g.bias.values())), 1e-3);
}

INSTANTIATE_TEST_SUITE_P(StridesAndPadding, ConvGradient,
                         ::testing::Values(ConvCase{1, 0}, ConvCase{1, 1}, ConvCase{2, 1},
                                           ConvCase{2, 0}));

TEST(Conv2d, BackwardIsAdjointOfForward) {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const ConvParams params{static_cast<std::size_t>(1 + trial % 2), static_cast<std::size_t>(trial % 3 == 0 ? 0 : 1)};
    const Tensor x = random_tensor({3, 9, 8}, rng);
    const Tensor k = random_tensor({4, 3, 3, 3}, rng);
    const Tensor zero_bias({4});
    const Tensor y = random_tensor(conv2d_forward(x, k, zero_bias, params).shape(), rng);
    const double lhs = dot(conv2d_forward(x, k, zero_bias, params), y);
    const double rhs = dot(x, conv2d_backward(x, k, y, params).input);
    EXPECT_NEAR(lhs, rhs, 1e-4 * std::max(1.0, std::fabs(lhs)));
  }
}

TEST(Linear, ForwardAndGradient) {
  SplitMix64 rng(3);
  Tensor x = random_tensor({6}, rng);
  Tensor w = random_tensor({4, 6}, rng);
  Tensor b = random_tensor({4}, rng);
  const Tensor y = linear_forward(x, w, b);
  float expect0 = b[0];
  for (std::size_t i = 0; i < 6; ++i) expect0 += w[i] * x[i];
  EXPECT_NEAR(y[0], expect0, 1e-6);

  const Tensor probe = random_tensor({4}, rng);
  auto objective = [&] { return dot(linear_forward(x, w, b), probe); };
  const LinearGrads g = linear_backward(x, w, probe);
  EXPECT_LT(relative_error(central_difference(x.values(), 1e-2f, objective), as_double(g.input.values())), 1e-3);
  EXPECT_LT(relative_error(central_difference(w.values(), 1e-2f, objective), as_double(g.weight.values())), 1e-3);
  EXPECT_LT(relative_error(central_difference(b.values(), 1e-2f, objective), as_double(g.bias.values())), 1e-3);
}

TEST(Softmax, SumsToOneAndStable) {
  const std::vector<float> logits{1000.0f, 1000.0f, -1000.0f};
  const auto p = softmax(logits);
  EXPECT_FLOAT_EQ(p[0], 0.5f);
  EXPECT_FLOAT_EQ(p[1], 0.5f);
  EXPECT_EQ(p[2], 0.0f);
  const auto u = softmax(std::vector<float>(5, 0.0f));
  for (float v : u) EXPECT_EQ(v, 0.2f);
}

TEST(Softmax, BackwardMatchesFiniteDifferences) {
  SplitMix64 rng(9);
  Tensor logits = random_tensor({5}, rng, -2, 2);
  const Tensor probe = random_tensor({5}, rng);
  auto objective = [&] {
    const auto p = softmax(logits.values());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += static_cast<double>(p[i]) * probe[i];
    return s;
  };
  const auto p = softmax(logits.values());
  const auto g = softmax_backward(p, probe.values());
  EXPECT_LT(relative_error(central_difference(logits.values(), 1e-2f, objective), as_double(g)), 1e-3);
}

TEST(Relu, ForwardBackward) {
  Tensor t({4}, std::vector<float>{-1.0f, 0.0f, 2.0f, -3.0f});
  relu_inplace(t);
  EXPECT_EQ(t, Tensor({4}, std::vector<float>{0.0f, 0.0f, 2.0f, 0.0f}));
  Tensor g({4}, 1.0f);
  relu_backward_inplace(g, t);
  EXPECT_EQ(g, Tensor({4}, std::vector<float>{0.0f, 0.0f, 1.0f, 0.0f}));
}

TEST(Init, PriorBias) { EXPECT_NEAR(prior_bias(0.01f), -4.59512, 1e-5); }

TEST(Init, GaussianIsDeterministic) {
  EXPECT_EQ(gaussian_init({4, 5}, 0.01f, 42), gaussian_init({4, 5}, 0.01f, 42));
  EXPECT_NE(gaussian_init({4, 5}, 0.01f, 42), gaussian_init({4, 5}, 0.01f, 43));
}

TEST(Init, GaussianMoments) {
  const Tensor t = gaussian_init({1000000}, 0.01f, 7);
  double mean = 0.0, sq = 0.0;
  for (float v : t.values()) mean += v;
  mean /= static_cast<double>(t.size());
  for (float v : t.values()) sq += (v - mean) * (v - mean);
  const double stddev = std::sqrt(sq / static_cast<double>(t.size()));
  EXPECT_LT(std::fabs(mean), 0.01 * 0.01);
  EXPECT_NEAR(stddev, 0.01, 0.01 * 0.01);
}

TEST(Init, RejectsNonPositiveSigma) {
  EXPECT_THROW(gaussian_init({2}, 0.0f, 1), std::invalid_argument);
}

TEST(Init, BiasFill) { EXPECT_EQ(bias_init({3}, 0.1f), Tensor({3}, 0.1f)); }

TEST(FiniteDifference, QuadraticIsExact) {
  std::vector<float> x{1.0f, 2.0f};
  const auto g = central_difference(std::span<float>(x), 1e-3f, [&] {
    return static_cast<double>(x[0]) * x[0] + static_cast<double>(x[1]) * x[1];
  });
  EXPECT_NEAR(g[0], 2.0, 1e-6);
  EXPECT_NEAR(g[1], 4.0, 1e-6);
  EXPECT_EQ(x, (std::vector<float>{1.0f, 2.0f}));
}

TEST(Optimizer, ZeroLearningRateLeavesParametersUnchanged) {
  SplitMix64 rng(2);
  Parameter p("w", random_tensor({10}, rng));
  p.grad = random_tensor({10}, rng);
  p.velocity = random_tensor({10}, rng);
  const Tensor before = p.value;
  SgdOptimizer opt({0.9f, 1e-4f});
  Parameter* ptrs[] = {&p};
  for (int i = 0; i < 5; ++i) opt.step(ptrs, 0.0f);
  EXPECT_EQ(p.value, before);
}

TEST(Optimizer, MomentumUpdate) {
  Parameter p("w", Tensor({1}, 1.0f));
  p.grad[0] = 0.5f;
  SgdOptimizer opt({0.9f, 0.1f});
  Parameter* ptrs[] = {&p};
  opt.step(ptrs, 0.1f);
  // v = 0.5 + 0.1 * 1 = 0.6; theta = 1 - 0.06
  EXPECT_NEAR(p.value[0], 0.94f, 1e-6);
  opt.step(ptrs, 0.1f);
  // v = 0.9 * 0.6 + 0.5 + 0.1 * 0.94 = 1.134
  EXPECT_NEAR(p.value[0], 0.94f - 0.1134f, 1e-6);
  SgdOptimizer::zero_grad(ptrs);
  EXPECT_EQ(p.grad[0], 0.0f);
}

TEST(TensorIo, RoundTrip) {
  SplitMix64 rng(4);
  const Tensor t = random_tensor({2, 3, 4}, rng);
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 8), "SAPDTNSR");
  EXPECT_EQ(bytes.size(), 8u + 1u + 4u + 3u * 8u + 24u * 4u);
  EXPECT_EQ(read_tensor(ss), t);
}

TEST(TensorIo, RejectsCorruption) {
  std::stringstream ss;
  write_tensor(ss, Tensor({2}, 1.0f));
  std::string bytes = ss.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream a(bad_magic);
  EXPECT_THROW(read_tensor(a), std::runtime_error);

  std::string bad_version = bytes;
  bad_version[8] = 9;
  std::istringstream b(bad_version);
  EXPECT_THROW(read_tensor(b), std::runtime_error);

  std::istringstream c(bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(read_tensor(c), std::runtime_error);
}

}  // namespace
}  // namespace sapd
