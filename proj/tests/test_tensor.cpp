#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "panet/random.hpp"
#include "panet/tensor.hpp"

using namespace panet;

TEST(Tensor, ZerosValidatesShape) {
  EXPECT_THROW(Tensor<float>::zeros({2, 0, 3}), InvalidShape);
  const auto t = Tensor<float>::zeros({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.dim(2), 4u);
  for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Tensor, ReshapeKeepsDataAndChecksCount) {
  Tensor<double> t({2, 6});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = double(i);
  const auto r = t.reshape({3, 4});
  EXPECT_EQ(r.shape(), (Shape{3, 4}));
  EXPECT_EQ(r.to_vector(), t.to_vector());
  EXPECT_ANY_THROW(t.reshape({5, 2}));
}

TEST(Tensor, RankFourIndexingIsRowMajor) {
  Tensor<float> t({2, 3, 4, 5});
  t.at(1, 2, 3, 4) = 7;
  EXPECT_EQ(t[((1 * 3 + 2) * 4 + 3) * 5 + 4], 7.0f);
}

TEST(Tensor, ConcatSplitRoundTrip) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::size_t ca = 1 + seed, cb = 2 + (seed % 3);
    const auto a = randn_seeded<float>({2, ca, 3, 4}, 1.0, seed, 1);
    const auto b = randn_seeded<float>({2, cb, 3, 4}, 1.0, seed, 2);
    const auto c = concat_channels(a, b);
    EXPECT_EQ(c.dim(1), ca + cb);
    EXPECT_EQ(c.at(1, ca, 2, 3), b.at(1, 0, 2, 3));
    const auto [a2, b2] = split_channels(c, ca);
    EXPECT_EQ(a2, a);
    EXPECT_EQ(b2, b);
  }
  EXPECT_THROW(concat_channels(Tensor<float>({1, 1, 2, 2}), Tensor<float>({1, 1, 3, 2})), ShapeMismatch);
}

TEST(Tensor, BatchHelpers) {
  const auto a = randn_seeded<float>({1, 2, 3, 3}, 1.0, 1);
  const auto b = randn_seeded<float>({1, 2, 3, 3}, 1.0, 2);
  const auto ab = concat_batch(std::vector<Tensor<float>>{a, b});
  EXPECT_EQ(ab.dim(0), 2u);
  EXPECT_EQ(batch_item(ab, 0), a);
  EXPECT_EQ(batch_item(ab, 1), b);
}

TEST(Tensor, ElementwiseOps) {
  Tensor<double> x({4}, {-2.0, -0.5, 0.0, 3.0});
  EXPECT_EQ(relu(x).to_vector(), (std::vector<double>{0, 0, 0, 3}));
  const auto lr = leaky_relu(x, 0.2);
  EXPECT_DOUBLE_EQ(lr[0], -0.4);
  EXPECT_DOUBLE_EQ(lr[3], 3.0);
  Tensor<double> g({4}, {1, 1, 1, 1});
  EXPECT_EQ(relu_backward(x, g).to_vector(), (std::vector<double>{0, 0, 0, 1}));
  EXPECT_EQ(leaky_relu_backward(x, 0.2, g).to_vector(), (std::vector<double>{0.2, 0.2, 0.2, 1}));

  Tensor<double> a({3}, {1, 2, 3});
  axpy_inplace(a, 2.0, Tensor<double>({3}, {1, 1, 1}));
  EXPECT_EQ(a.to_vector(), (std::vector<double>{3, 4, 5}));
  add_inplace(a, Tensor<double>({3}, {-3, -4, -5}));
  EXPECT_EQ(a.to_vector(), (std::vector<double>{0, 0, 0}));
  EXPECT_DOUBLE_EQ(max_abs_diff(scaled(Tensor<double>({2}, {1, -2}), 3.0), Tensor<double>({2}, {3, -6})), 0.0);
}

TEST(Tensor, EnsureFiniteNamesIndex) {
  Tensor<float> t({3});
  EXPECT_TRUE(all_finite(t));
  t[2] = std::nanf("");
  EXPECT_FALSE(all_finite(t));
  try {
    ensure_finite(t, "probe");
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("probe"), std::string::npos);
  }
}

TEST(Random, CounterRngIsPureFunctionOfInputs) {
  const CounterRng a(42, 3), b(42, 3), c(42, 4);
  for (std::uint64_t i = 0; i < 100; ++i) {
    EXPECT_EQ(a.bits(i), b.bits(i));
    EXPECT_NE(a.bits(i), c.bits(i));
    const double u = a.uniform(i);
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(a.below(i, 7), 7u);
  }
}

TEST(Random, RandnMomentsAndDeterminism) {
  const auto t = randn_seeded<double>({20000}, 2.0, 9);
  double mean = 0, var = 0;
  for (double v : t.data()) mean += v;
  mean /= double(t.numel());
  for (double v : t.data()) var += (v - mean) * (v - mean);
  var /= double(t.numel());
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(std::sqrt(var), 2.0, 0.05);
  EXPECT_EQ(t, randn_seeded<double>({20000}, 2.0, 9));
  // Entry i does not depend on the total size.
  const auto head = randn_seeded<double>({10}, 2.0, 9);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(head[i], t[i]);
}

TEST(Random, UniformRange) {
  const auto t = rand_uniform_seeded<float>({5000}, -1.5, 0.5, 3);
  for (float v : t.data()) {
    EXPECT_GE(v, -1.5f);
    EXPECT_LT(v, 0.5f);
  }
}

TEST(Random, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}
