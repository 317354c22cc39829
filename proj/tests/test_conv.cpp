#include <gtest/gtest.h>

#include "msrpb/conv.hpp"
#include "msrpb/errors.hpp"
#include "oracles.hpp"

using namespace msrpb;

namespace {

ConvKernel random_kernel(std::size_t out, std::size_t in, Extent3 size, Extent3 stride, Extent3 pad, oracle::Rng &rng,
                         bool transposed = false) {
  ConvKernel k = transposed ? ConvKernel::make_transposed(in, out, size, stride, pad)
                            : ConvKernel::make(out, in, size, stride, pad);
  k.weights = oracle::random_tensor(k.weights.shape(), rng);
  k.bias = oracle::random_tensor(k.bias.shape(), rng);
  return k;
}

} // namespace

TEST(Conv3, ImpulseKernelIsIdentity) {
  oracle::Rng rng(1);
  const Tensor x = oracle::random_tensor({1, 4, 5, 6}, rng);
  ConvKernel k = ConvKernel::same(1, 1, {3, 3, 3});
  k.weights.fill(0.0);
  k.weights[13] = 1.0;
  EXPECT_EQ(max_abs_diff(conv3(x, k), x), 0.0);
}

TEST(Conv3, ZeroKernelGivesZero) {
  oracle::Rng rng(2);
  const Tensor x = oracle::random_tensor({2, 4, 4, 4}, rng);
  ConvKernel k = ConvKernel::same(3, 2, {3, 3, 3});
  k.weights.fill(0.0);
  k.bias.fill(0.0);
  EXPECT_EQ(max_abs(conv3(x, k)), 0.0);
}

TEST(Conv3, MatchesDirectLoops) {
  oracle::Rng rng(3);
  const Tensor x = oracle::random_tensor({1, 4, 4, 4}, rng);
  const ConvKernel k = random_kernel(1, 1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, rng);
  EXPECT_LT(max_abs_diff(conv3(x, k), oracle::direct_conv3(x, k)), 1e-12);
}

TEST(Conv3, StridedMultiChannelMatchesDirectLoops) {
  oracle::Rng rng(4);
  const Tensor x = oracle::random_tensor({3, 5, 9, 8}, rng);
  const ConvKernel k = random_kernel(2, 3, {3, 4, 3}, {1, 2, 2}, {1, 1, 0}, rng);
  const Tensor y = conv3(x, k);
  EXPECT_EQ(y.shape(), k.output_shape(x.shape()));
  EXPECT_LT(max_abs_diff(y, oracle::direct_conv3(x, k)), 1e-12);
}

TEST(Kernels, ParallelMatchesReference) {
  oracle::Rng rng(5);
  const Tensor x = oracle::random_tensor({3, 4, 10, 10}, rng);
  const Tensor w = oracle::random_tensor({2, 3, 3, 6, 6}, rng);
  const Extent3 stride{1, 2, 2}, pad{1, 2, 2};
  const std::vector<std::size_t> out_shape{2, 4, 5, 5};
  const Tensor y = kernels::correlate(x, w, stride, pad, out_shape);
  EXPECT_LT(max_abs_diff(y, reference::correlate(x, w, stride, pad, out_shape)), 1e-12);
  const Tensor g = oracle::random_tensor(out_shape, rng);
  EXPECT_LT(max_abs_diff(kernels::scatter(g, w, stride, pad, x.shape()),
                         reference::scatter(g, w, stride, pad, x.shape())),
            1e-12);
  EXPECT_LT(max_abs_diff(kernels::weight_grad(x, g, stride, pad, {3, 6, 6}),
                         reference::weight_grad(x, g, stride, pad, {3, 6, 6})),
            1e-12);
}

TEST(Deconv3, StrideTwoDoublesExtent) {
  oracle::Rng rng(6);
  const ConvKernel k = random_kernel(4, 4, {1, 6, 6}, {1, 2, 2}, {0, 2, 2}, rng, true);
  const Tensor x = oracle::random_tensor({4, 3, 5, 7}, rng);
  const Tensor y = deconv3(x, k);
  EXPECT_EQ(y.shape(), (std::vector<std::size_t>{4, 3, 10, 14}));
}

TEST(Deconv3, AdjointOfConv3) {
  oracle::Rng rng(7);
  ConvKernel c = random_kernel(3, 2, {3, 6, 6}, {1, 2, 2}, {1, 2, 2}, rng);
  c.bias.fill(0.0);
  ConvKernel d = c;
  d.transposed = true;
  d.bias = Tensor({2});
  const Tensor x = oracle::random_tensor({2, 4, 8, 8}, rng);
  const Tensor y = oracle::random_tensor(c.output_shape(x.shape()), rng);
  const double lhs = dot(conv3(x, c), y);
  const double rhs = dot(x, deconv3(y, d));
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
}

TEST(Deconv3, ZeroInputBroadcastsBias) {
  oracle::Rng rng(8);
  const ConvKernel k = random_kernel(3, 2, {1, 4, 4}, {1, 2, 2}, {0, 1, 1}, rng, true);
  const Tensor y = deconv3(Tensor({2, 2, 3, 3}), k);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < y.size() / 3; ++i)
      EXPECT_EQ(y[c * (y.size() / 3) + i], k.bias[c]);
}

TEST(Conv3, BackwardIsExactAdjoint) {
  oracle::Rng rng(9);
  const ConvKernel k = random_kernel(2, 3, {3, 3, 3}, {1, 2, 1}, {1, 1, 1}, rng);
  const Tensor x = oracle::random_tensor({3, 4, 6, 5}, rng);
  const Tensor g = oracle::random_tensor(k.output_shape(x.shape()), rng);
  const ConvGrads grads = conv3_backward(x, g, k);
  // conv3 is affine in x and in (weights, bias): check both pairings.
  const Tensor dx = oracle::random_tensor(x.shape(), rng);
  ConvKernel zero_bias = k;
  zero_bias.bias.fill(0.0);
  EXPECT_NEAR(dot(conv3(dx, zero_bias), g), dot(dx, grads.input), 1e-10);
  ConvKernel dk = k;
  dk.weights = oracle::random_tensor(k.weights.shape(), rng);
  dk.bias = oracle::random_tensor(k.bias.shape(), rng);
  EXPECT_NEAR(dot(conv3(x, dk), g), dot(dk.weights, grads.weights) + dot(dk.bias, grads.bias), 1e-10);
}

TEST(Deconv3, BackwardIsExactAdjoint) {
  oracle::Rng rng(10);
  const ConvKernel k = random_kernel(2, 3, {1, 6, 6}, {1, 2, 2}, {0, 2, 2}, rng, true);
  const Tensor x = oracle::random_tensor({3, 2, 4, 4}, rng);
  const Tensor g = oracle::random_tensor(k.output_shape(x.shape()), rng);
  const ConvGrads grads = deconv3_backward(x, g, k);
  ConvKernel zero_bias = k;
  zero_bias.bias.fill(0.0);
  const Tensor dx = oracle::random_tensor(x.shape(), rng);
  EXPECT_NEAR(dot(deconv3(dx, zero_bias), g), dot(dx, grads.input), 1e-10);
  ConvKernel dk = k;
  dk.weights = oracle::random_tensor(k.weights.shape(), rng);
  dk.bias = oracle::random_tensor(k.bias.shape(), rng);
  EXPECT_NEAR(dot(deconv3(x, dk), g), dot(dk.weights, grads.weights) + dot(dk.bias, grads.bias), 1e-10);
}

TEST(AvgPool, BlockMeanAndBounds) {
  Tensor x({1, 1, 2, 2});
  x[0] = 1;
  x[1] = 3;
  x[2] = 5;
  x[3] = 7;
  const Tensor y = avg_pool(x, 2);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y[0], 4.0);
  EXPECT_EQ(max_abs(avg_pool(Tensor({2, 3, 4, 4}, 0.25), 2) - Tensor({2, 3, 2, 2}, 0.25)), 0.0);
  oracle::Rng rng(11);
  const Tensor r = oracle::random_tensor({2, 3, 8, 8}, rng);
  EXPECT_LE(max_abs(avg_pool(r, 4)), max_abs(r));
}

TEST(AvgPool, BackwardIsAdjoint) {
  oracle::Rng rng(12);
  const Tensor x = oracle::random_tensor({2, 3, 8, 4}, rng);
  const Tensor g = oracle::random_tensor({2, 3, 4, 2}, rng);
  EXPECT_NEAR(dot(avg_pool(x, 2), g), dot(x, avg_pool_backward(g, 2)), 1e-12);
}

TEST(AvgPool, RejectsIndivisibleExtent) { EXPECT_THROW(avg_pool(Tensor({1, 1, 3, 4}), 2), ContractError); }

TEST(ConvKernel, OutputShapes) {
  const ConvKernel c = ConvKernel::make(4, 2, {3, 6, 6}, {1, 2, 2}, {1, 2, 2});
  EXPECT_EQ(c.output_shape({2, 5, 16, 16}), (std::vector<std::size_t>{4, 5, 8, 8}));
  const ConvKernel d = ConvKernel::make_transposed(2, 4, {3, 6, 6}, {1, 2, 2}, {1, 2, 2});
  EXPECT_EQ(d.output_shape({2, 5, 8, 8}), (std::vector<std::size_t>{4, 5, 16, 16}));
  EXPECT_THROW(c.output_shape({3, 5, 16, 16}), ContractError);
  EXPECT_THROW(ConvKernel::same(1, 1, {2, 3, 3}), ConfigError);
}
