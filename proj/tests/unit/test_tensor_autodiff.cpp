#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "staa/autodiff.hpp"

using namespace staa;
using staa::testing::gradient_error;

namespace {

Tensor<double> rand_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  return Tensor<double>::uniform(std::move(s), lo, hi, rng);
}

}  // namespace

TEST(Tensor, ShapeInvariants) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_THROW(Tensor<float>({2, 0, 4}), EmptyInputError);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>(3)), DimensionError);
  auto s = Tensor<float>::scalar(4.0f);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(s.numel(), 1u);
}

TEST(Tensor, RowMajorIndexing) {
  auto t = Tensor<int>::from({2, 3}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.at(1, 0), 3);
  EXPECT_EQ(t.at(0, 2), 2);
  EXPECT_THROW(t.reshaped({4}), DimensionError);
  EXPECT_EQ(t.reshaped({3, 2}).at(2, 1), 5);
}

TEST(Autodiff, SumGivesOnes) {
  Tape<double> tape;
  auto x = tape.leaf(rand_tensor({2, 3}, 1));
  tape.backward(sum(x));
  for (double g : tape.grad(x).data()) EXPECT_EQ(g, 1.0);
}

TEST(Autodiff, HalfMeanSquaredError) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::from({1}, {3.0}));
  auto y = tape.constant(Tensor<double>::from({1}, {1.0}));
  auto d = sub(x, y);
  tape.backward(scale(mean(mul(d, d)), 0.5));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 2.0);
}

TEST(Autodiff, UnreachedLeafHasZeroGradient) {
  Tape<double> tape;
  auto x = tape.leaf(rand_tensor({3}, 2));
  auto unused = tape.leaf(rand_tensor({2, 2}, 3));
  tape.backward(sum(x));
  const auto g = tape.grad(unused);
  EXPECT_EQ(g.shape(), (Shape{2, 2}));
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(Autodiff, NonScalarLossRejected) {
  Tape<double> tape;
  auto x = tape.leaf(rand_tensor({3}, 4));
  EXPECT_THROW(tape.backward(x), DimensionError);
}

TEST(Autodiff, BinaryShapeMismatch) {
  Tape<double> tape;
  auto a = tape.leaf(rand_tensor({3}, 5));
  auto b = tape.leaf(rand_tensor({4}, 6));
  EXPECT_THROW(add(a, b), DimensionError);
  EXPECT_THROW(mul(a, b), DimensionError);
  EXPECT_THROW(l1_loss(a, b), DimensionError);
}

TEST(Autodiff, L1LossValues) {
  Tape<double> tape;
  auto a = tape.leaf(Tensor<double>::from({2}, {1.0, 2.0}));
  auto z = tape.constant(Tensor<double>::zeros({2}));
  EXPECT_DOUBLE_EQ(l1_loss(a, z).value()[0], 1.5);

  Tape<double> t2;
  auto x = t2.leaf(rand_tensor({4}, 7));
  auto x2 = t2.leaf(x.value());
  auto loss = l1_loss(x, x2);
  EXPECT_EQ(loss.value()[0], 0.0);
  t2.backward(loss);
  for (double g : t2.grad(x).data()) EXPECT_EQ(g, 0.0);
}

TEST(Autodiff, ReluSubgradientAtZero) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::from({3}, {-1.0, 0.0, 2.0}));
  tape.backward(sum(relu(x)));
  const auto g = tape.grad(x);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 1.0);
}

TEST(Autodiff, LeakyReluSlope) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::from({2}, {-2.0, 3.0}));
  auto y = leaky_relu(x);
  EXPECT_DOUBLE_EQ(y.value()[0], -0.2);
  EXPECT_DOUBLE_EQ(y.value()[1], 3.0);
}

TEST(Softmax, UniformOnZeros) {
  Tape<double> tape;
  auto y = softmax_flat(tape.leaf(Tensor<double>::zeros({3, 3, 3})));
  for (double v : y.value().data()) EXPECT_NEAR(v, 1.0 / 27.0, 1e-15);
}

TEST(Softmax, ClosedForm) {
  Tape<double> tape;
  auto y = softmax_flat(tape.leaf(Tensor<double>::from({2}, {std::log(1.0), std::log(3.0)})));
  EXPECT_NEAR(y.value()[0], 0.25, 1e-15);
  EXPECT_NEAR(y.value()[1], 0.75, 1e-15);
}

TEST(Softmax, ProbabilityVectorForLargeInputs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tape<double> tape;
    auto y = softmax_flat(tape.leaf(rand_tensor({27}, seed, -500.0, 500.0)));
    double total = 0.0;
    for (double v : y.value().data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Softmax, NonFiniteRejected) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::from({2}, {0.0, std::nan("")}));
  EXPECT_THROW(softmax_flat(x), NumericError);
}

TEST(ConcatSlice, RoundTrip) {
  Tape<double> tape;
  auto a = tape.leaf(rand_tensor({2, 3, 4}, 8));
  auto b = tape.leaf(rand_tensor({2, 5, 4}, 9));
  auto c = concat<double>({a, b}, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 8, 4}));
  EXPECT_EQ(slice(c, 1, 0, 3).value(), a.value());
  EXPECT_EQ(slice(c, 1, 3, 5).value(), b.value());
  EXPECT_THROW(slice(c, 1, 6, 3), DimensionError);
}

TEST(Autodiff, DeterministicGradients) {
  auto run = [] {
    Tape<double> tape;
    auto x = tape.leaf(rand_tensor({4, 4}, 10));
    auto y = tanh(mul(x, sigmoid(x)));
    tape.backward(sum(y));
    return tape.grad(x);
  };
  EXPECT_EQ(run(), run());
}

class ElementwiseGrad : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(ElementwiseGrad, FiniteDifference) {
  const auto seed = GetParam();
  auto a = rand_tensor({2, 3}, seed), b = rand_tensor({2, 3}, seed + 100);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return add(v[0], v[1]); }, {a, b}), 1e-4);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return sub(v[0], v[1]); }, {a, b}), 1e-4);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return mul(v[0], v[1]); }, {a, b}), 1e-4);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return relu(v[0]); }, {a}), 1e-4);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return leaky_relu(v[0], 0.1); }, {a}), 1e-4);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return sigmoid(v[0]); }, {a}), 1e-4);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return tanh(v[0]); }, {a}), 1e-4);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return softmax_flat(v[0]); }, {a}), 1e-4);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return l1_loss(v[0], v[1]); }, {a, b}), 1e-4);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return mean(v[0]); }, {a}), 1e-4);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return concat<double>({v[0], v[1]}, 1); }, {a, b}), 1e-4);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return slice(v[0], 1, 1, 2); }, {a}), 1e-4);
  auto x = rand_tensor({3, 2, 2}, seed + 200), bias = rand_tensor({3}, seed + 300);
  EXPECT_LT(gradient_error([](auto&, auto& v) { return add_channel_bias(v[0], v[1]); }, {x, bias}), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, ElementwiseGrad, ::testing::Range<std::uint64_t>(0, 5));
