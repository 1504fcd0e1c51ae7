#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "panet/nn_ops.hpp"
#include "panet/random.hpp"
#include "support.hpp"

using namespace panet;
using panet::test::dot;
using panet::test::naive_conv2d;

namespace {

LayerParams<double> random_layer(const ConvSpec& s, std::uint64_t seed, bool transposed = false) {
  const Shape ws = transposed ? Shape{s.in_channels, s.out_channels, s.kernel_h, s.kernel_w}
                              : Shape{s.out_channels, s.in_channels, s.kernel_h, s.kernel_w};
  return {randn_seeded<double>(ws, 0.5, seed, 1), randn_seeded<double>({s.out_channels}, 0.5, seed, 2)};
}

}  // namespace

TEST(ConvSpec, OutputSizes) {
  const auto s = ConvSpec::same3x3(1, 1);
  EXPECT_EQ(s.out_h(17), 17u);
  const auto d = ConvSpec{1, 1, 4, 4, 2, 2, 1, 1};
  EXPECT_EQ(d.out_h(24), 12u);
  EXPECT_EQ(ConvSpec::upsample2x(1, 1).transposed_out_h(15), 30u);
  EXPECT_THROW(ConvSpec({1, 1, 4, 4, 1, 1, 0, 0}).out_h(3), InvalidParam);
}

TEST(Conv2d, MatchesNaiveLoops) {
  const ConvSpec specs[] = {ConvSpec::same3x3(3, 4), ConvSpec{2, 5, 4, 4, 2, 2, 1, 1}, ConvSpec::pointwise(4, 2),
                            ConvSpec{3, 2, 3, 5, 1, 2, 0, 2}};
  std::uint64_t seed = 1;
  for (const auto& s : specs) {
    const auto x = randn_seeded<double>({2, s.in_channels, 9, 10}, 1.0, seed, 0);
    const auto p = random_layer(s, seed++);
    const auto y = conv2d(x, p, s);
    const auto ref = naive_conv2d(x, p, s);
    ASSERT_EQ(y.shape(), ref.shape());
    EXPECT_LT(max_abs_diff(y, ref), 1e-12);
  }
}

TEST(Conv2d, FloatAgreesWithDouble) {
  const auto s = ConvSpec::same3x3(8, 8);
  const auto x = randn_seeded<double>({1, 8, 12, 12}, 1.0, 4);
  const auto p = random_layer(s, 4);
  const auto yd = conv2d(x, p, s);
  const LayerParams<float> pf{p.weight.cast<float>(), p.bias.cast<float>()};
  const auto yf = conv2d(x.cast<float>(), pf, s).cast<double>();
  EXPECT_LT(max_abs_diff(yd, yf), 1e-4);
}

TEST(Conv2d, RejectsChannelMismatch) {
  const auto s = ConvSpec::same3x3(3, 4);
  EXPECT_THROW(conv2d(Tensor<double>({1, 2, 5, 5}), random_layer(s, 1), s), ShapeMismatch);
}

TEST(Conv2d, BackwardIsAdjointOfForward) {
  // <conv(x) - b, g> == <x, dx> and parameter grads match their bilinear forms.
  const auto s = ConvSpec{3, 4, 4, 4, 2, 2, 1, 1};
  const auto x = randn_seeded<double>({2, 3, 10, 10}, 1.0, 5, 0);
  auto p = random_layer(s, 5);
  const auto y = conv2d(x, p, s);
  const auto g = randn_seeded<double>(y.shape(), 1.0, 5, 9);
  LayerParams<double> grads = p.zeros_like();
  const auto dx = conv2d_backward(x, p, s, g, &grads);
  const LayerParams<double> nobias{p.weight, {}};
  EXPECT_NEAR(dot(conv2d(x, nobias, s), g), dot(x, dx), 1e-9);
  EXPECT_NEAR(dot(conv2d(x, nobias, s), g), dot(p.weight, grads.weight), 1e-9);
  double gsum_o0 = 0;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < y.dim(2); ++i)
      for (std::size_t j = 0; j < y.dim(3); ++j) gsum_o0 += g.at(n, 0, i, j);
  EXPECT_NEAR(grads.bias[0], gsum_o0, 1e-10);
  EXPECT_LT(max_abs_diff(conv2d_backward_data(g, p.weight, s, 10, 10), dx), 1e-12);
}

TEST(ConvTranspose2d, IsAdjointOfConv) {
  // conv: A -> B channels with weight B x A x k x k. The transposed layer maps
  // B -> A and stores the same array as in x out.
  const std::size_t A = 3, B = 5;
  const ConvSpec conv{A, B, 4, 4, 2, 2, 1, 1};
  const ConvSpec convt = ConvSpec::upsample2x(B, A);
  const auto w = randn_seeded<double>({B, A, 4, 4}, 1.0, 6);
  const auto x = randn_seeded<double>({1, A, 8, 8}, 1.0, 7);
  const auto y = randn_seeded<double>({1, B, 4, 4}, 1.0, 8);
  const auto cx = conv2d(x, LayerParams<double>{w, {}}, conv);
  const auto ty = conv_transpose2d(y, LayerParams<double>{w, {}}, convt);
  ASSERT_EQ(ty.shape(), (Shape{1, A, 8, 8}));
  EXPECT_NEAR(dot(cx, y), dot(x, ty), 1e-10);
}

TEST(ConvTranspose2d, BiasAddsPerChannel) {
  const auto s = ConvSpec::upsample2x(2, 3);
  auto p = random_layer(s, 3, true);
  const auto x = randn_seeded<double>({1, 2, 3, 3}, 1.0, 1);
  const auto with_bias = conv_transpose2d(x, p, s);
  const auto no_bias = conv_transpose2d(x, LayerParams<double>{p.weight, {}}, s);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(with_bias.at(0, c, i, 2) - no_bias.at(0, c, i, 2), p.bias[c], 1e-12);
}

TEST(Pool, MaxAndMeanOfWindows) {
  Tensor<double> x({1, 1, 2, 4}, {1, 5, -1, -2, 3, 2, -3, -4});
  EXPECT_EQ(maxpool2(x).to_vector(), (std::vector<double>{5, -1}));
  EXPECT_EQ(avgpool2(x).to_vector(), (std::vector<double>{2.75, -2.5}));
  const Tensor<double> g({1, 1, 1, 2}, {10, 20});
  EXPECT_EQ(maxpool2_backward(x, g).to_vector(), (std::vector<double>{0, 10, 20, 0, 0, 0, 0, 0}));
  EXPECT_EQ(avgpool2_backward(x, g).to_vector(), (std::vector<double>{2.5, 2.5, 5, 5, 2.5, 2.5, 5, 5}));
  EXPECT_THROW(maxpool2(Tensor<double>({1, 1, 3, 4})), ShapeMismatch);
}

TEST(Pool, TiesRouteToFirstElement) {
  Tensor<double> x({1, 1, 2, 2}, {4, 4, 4, 4});
  const auto g = maxpool2_backward(x, Tensor<double>({1, 1, 1, 1}, {1}));
  EXPECT_EQ(g.to_vector(), (std::vector<double>{1, 0, 0, 0}));
}

TEST(Bilinear, IntegerAndFractionalReads) {
  const auto f = randn_seeded<double>({2, 4, 5}, 1.0, 11);
  EXPECT_DOUBLE_EQ(bilinear_sample(f, 1, 2.0, 3.0), f[(1 * 4 + 2) * 5 + 3]);
  const double y = 1.25, x = 2.6;
  auto v = [&](int r, int c) { return f[(0 * 4 + r) * 5 + c]; };
  const double ref = 0.75 * 0.4 * v(1, 2) + 0.75 * 0.6 * v(1, 3) + 0.25 * 0.4 * v(2, 2) + 0.25 * 0.6 * v(2, 3);
  EXPECT_NEAR(bilinear_sample(f, 0, y, x), ref, 1e-14);
  // Partly outside: only the in-bounds corner contributes.
  EXPECT_NEAR(bilinear_sample(f, 0, -0.5, -0.25), 0.5 * 0.75 * v(0, 0), 1e-14);
  EXPECT_EQ(bilinear_sample(f, 0, -1.0, 2.0), 0.0);
  EXPECT_EQ(bilinear_sample(f, 0, 2.0, 5.0), 0.0);
}

TEST(Bilinear, AnalyticCoordinateGradient) {
  const auto f = randn_seeded<double>({1, 6, 6}, 1.0, 12);
  for (double y : {0.3, 2.7, 4.1, -0.6}) {
    for (double x : {0.2, 3.5, 5.4}) {
      const auto g = bilinear_sample_grad(f, 0, y, x);
      const double h = 1e-6;
      EXPECT_NEAR(g.value, bilinear_sample(f, 0, y, x), 1e-15);
      EXPECT_NEAR(g.dy, (bilinear_sample(f, 0, y + h, x) - bilinear_sample(f, 0, y - h, x)) / (2 * h), 1e-7);
      EXPECT_NEAR(g.dx, (bilinear_sample(f, 0, y, x + h) - bilinear_sample(f, 0, y, x - h)) / (2 * h), 1e-7);
    }
  }
}

TEST(Bilinear, BackwardScattersCornerWeights) {
  Tensor<double> grad({1, 3, 3});
  bilinear_sample_backward(grad, 0, 0.5, 1.25, 2.0);
  EXPECT_NEAR(grad[0 * 3 + 1], 2.0 * 0.5 * 0.75, 1e-15);
  EXPECT_NEAR(grad[0 * 3 + 2], 2.0 * 0.5 * 0.25, 1e-15);
  EXPECT_NEAR(grad[1 * 3 + 1], 2.0 * 0.5 * 0.75, 1e-15);
  EXPECT_NEAR(grad[1 * 3 + 2], 2.0 * 0.5 * 0.25, 1e-15);
  double total = 0;
  for (double v : grad.data()) total += v;
  EXPECT_NEAR(total, 2.0, 1e-15);
}

TEST(Spp, BinRangesCoverExtent) {
  for (std::size_t extent = 1; extent <= 70; ++extent) {
    for (std::size_t bins : {1u, 3u, 4u, 32u}) {
      std::size_t prev_end = 0;
      for (std::size_t i = 0; i < bins; ++i) {
        const auto [lo, hi] = spp_bin_range(i, extent, bins);
        EXPECT_LT(lo, hi);
        EXPECT_LE(lo, prev_end);
        EXPECT_LE(hi, extent);
        prev_end = hi;
      }
      EXPECT_EQ(spp_bin_range(0, extent, bins).first, 0u);
      EXPECT_EQ(prev_end, extent);
    }
  }
}

TEST(Spp, PoolsEachBin) {
  const auto r = randn_seeded<double>({2, 7, 5}, 1.0, 13);
  const std::size_t bins = 3;
  const auto mx = spp_pool(r, bins, PoolMode::kMax);
  const auto mn = spp_pool(r, bins, PoolMode::kMean);
  ASSERT_EQ(mx.shape(), (Shape{2, 3, 3}));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < bins; ++i)
      for (std::size_t j = 0; j < bins; ++j) {
        const auto [r0, r1] = spp_bin_range(i, 7, bins);
        const auto [c0, c1] = spp_bin_range(j, 5, bins);
        double m = -1e300, s = 0;
        for (std::size_t y = r0; y < r1; ++y)
          for (std::size_t x = c0; x < c1; ++x) {
            m = std::max(m, r[(c * 7 + y) * 5 + x]);
            s += r[(c * 7 + y) * 5 + x];
          }
        EXPECT_EQ(mx[(c * bins + i) * bins + j], m);
        EXPECT_NEAR(mn[(c * bins + i) * bins + j], s / double((r1 - r0) * (c1 - c0)), 1e-14);
      }
}

TEST(Spp, SmallRegionsUpsampleByRepetition) {
  // Fewer pixels than bins: every bin still reads at least one pixel.
  const auto r = randn_seeded<double>({1, 2, 2}, 1.0, 14);
  const auto out = spp_pool(r, 4, PoolMode::kMax);
  EXPECT_EQ(out.shape(), (Shape{1, 4, 4}));
  EXPECT_EQ(out[0], r[0]);
  EXPECT_EQ(out[15], r[3]);
}

TEST(GroupedFc, MatchesBlockDiagonalDense) {
  const std::size_t in = 12, out = 8, groups = 4, n = 3;
  EXPECT_EQ(grouped_fc_weight_count(in, out, groups), (in / groups) * (out / groups) * groups);
  const LayerParams<double> p{randn_seeded<double>({groups, out / groups, in / groups}, 1.0, 15, 1),
                              randn_seeded<double>({out}, 1.0, 15, 2)};
  const auto x = randn_seeded<double>({n, in}, 1.0, 15, 3);
  const auto y = grouped_fc(x, p, groups);
  ASSERT_EQ(y.shape(), (Shape{n, out}));
  const std::size_t gi = in / groups, go = out / groups;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < out; ++o) {
      const std::size_t g = o / go;
      double acc = p.bias[o];
      for (std::size_t k = 0; k < gi; ++k) acc += p.weight[(g * go + o % go) * gi + k] * x[b * in + g * gi + k];
      EXPECT_NEAR(y[b * out + o], acc, 1e-12);
    }
  EXPECT_THROW(grouped_fc(x, p, 5), ShapeMismatch);
}

TEST(GroupedFc, BackwardAdjoint) {
  const std::size_t in = 6, out = 4, groups = 2;
  const LayerParams<double> p{randn_seeded<double>({groups, out / groups, in / groups}, 1.0, 16, 1), {}};
  const auto x = randn_seeded<double>({2, in}, 1.0, 16, 2);
  const auto g = randn_seeded<double>({2, out}, 1.0, 16, 3);
  LayerParams<double> grads = p.zeros_like();
  const auto dx = grouped_fc_backward(x, p, groups, g, &grads);
  EXPECT_NEAR(dot(grouped_fc(x, p, groups), g), dot(x, dx), 1e-12);
  EXPECT_NEAR(dot(grouped_fc(x, p, groups), g), dot(p.weight, grads.weight), 1e-12);
}

TEST(InstanceNorm, ZeroMeanUnitVariancePerChannel) {
  const auto x = randn_seeded<double>({2, 3, 6, 7}, 3.0, 17);
  const auto y = instance_norm(x, 0.0);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      for (std::size_t i = 0; i < 42; ++i) m += y[(n * 3 + c) * 42 + i];
      m /= 42;
      for (std::size_t i = 0; i < 42; ++i) v += std::pow(y[(n * 3 + c) * 42 + i] - m, 2);
      EXPECT_NEAR(m, 0.0, 1e-12);
      EXPECT_NEAR(v / 42, 1.0, 1e-10);
    }
}

TEST(PoolMode, ParseRoundTrip) {
  EXPECT_EQ(parse_pool_mode(to_string(PoolMode::kMax)), PoolMode::kMax);
  EXPECT_EQ(parse_pool_mode(to_string(PoolMode::kMean)), PoolMode::kMean);
  EXPECT_THROW(parse_pool_mode("median"), InvalidParam);
}
