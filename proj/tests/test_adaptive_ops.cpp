#include <gtest/gtest.h>

#include "panet/adaptive_ops.hpp"
#include "panet/random.hpp"
#include "support.hpp"

using namespace panet;
using panet::test::dot;
using panet::test::naive_conv2d;

namespace {

// Direct evaluation of out(p) = sum_k w_k f(p + g_k + o_p(g_k)) + b.
Tensor<double> naive_deform(const Tensor<double>& f, const LayerParams<double>& p, const Tensor<double>& off) {
  const std::size_t n = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3), oc = p.weight.dim(0);
  Tensor<double> out({n, oc, h, w});
  for (std::size_t b = 0; b < n; ++b) {
    const Tensor<double> fb = batch_item(f, b);
    for (std::size_t o = 0; o < oc; ++o)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double acc = p.bias.empty() ? 0.0 : p.bias[o];
          for (std::size_t k = 0; k < 9; ++k) {
            const double sy = double(y) + double(k / 3) - 1 + off.at(b, 2 * k, y, x);
            const double sx = double(x) + double(k % 3) - 1 + off.at(b, 2 * k + 1, y, x);
            for (std::size_t ci = 0; ci < c; ++ci) acc += p.weight.at(o, ci, k / 3, k % 3) * bilinear_sample(fb, ci, sy, sx);
          }
          out.at(b, o, y, x) = acc;
        }
  }
  return out;
}

GeneratorSpec small_spec() {
  GeneratorSpec s;
  s.in_channels = 4;
  s.out_channels = 2;
  s.bins = 2;
  s.hidden = {8, 8};
  s.groups = {2, 2, 2};
  return s;
}

GeneratorParams<double> random_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  auto g = make_generator_params<double>(spec);
  std::uint64_t stream = 0;
  for (auto& layer : g.fc) {
    layer.weight = randn_seeded<double>(layer.weight.shape(), 0.4, seed, stream++);
    if (!layer.bias.empty()) layer.bias = randn_seeded<double>(layer.bias.shape(), 0.1, seed, stream++);
  }
  return g;
}

}  // namespace

TEST(DeformConv, ZeroOffsetsEqualConv) {
  const auto spec = ConvSpec::same3x3(3, 4);
  const auto f = randn_seeded<double>({2, 3, 7, 9}, 1.0, 1);
  const LayerParams<double> p{randn_seeded<double>({4, 3, 3, 3}, 1.0, 2), randn_seeded<double>({4}, 1.0, 3)};
  const OffsetField<double> zero{Tensor<double>({2, 18, 7, 9})};
  EXPECT_LT(max_abs_diff(deform_conv2d(f, p, zero, spec), naive_conv2d(f, p, spec)), 1e-12);
}

TEST(DeformConv, MatchesDirectFormulaAtRandomOffsets) {
  const auto spec = ConvSpec::same3x3(2, 3);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto f = randn_seeded<double>({1, 2, 6, 5}, 1.0, seed, 1);
    const LayerParams<double> p{randn_seeded<double>({3, 2, 3, 3}, 1.0, seed, 2), randn_seeded<double>({3}, 1.0, seed, 3)};
    const auto off = randn_seeded<double>({1, 18, 6, 5}, 1.5, seed, 4);
    EXPECT_LT(max_abs_diff(deform_conv2d(f, p, OffsetField<double>{off}, spec), naive_deform(f, p, off)), 1e-12);
  }
}

TEST(DeformConv, IntegerShiftReadsShiftedInput) {
  // Every tap displaced by (+1, -2): same as a conv over f(y+1, x-2) with zeros outside.
  const auto spec = ConvSpec::same3x3(1, 1);
  const auto f = randn_seeded<double>({1, 1, 6, 6}, 1.0, 5);
  const LayerParams<double> p{randn_seeded<double>({1, 1, 3, 3}, 1.0, 6), {}};
  Tensor<double> off({1, 18, 6, 6});
  for (std::size_t k = 0; k < 9; ++k)
    for (std::size_t i = 0; i < 36; ++i) {
      off[(2 * k) * 36 + i] = 1.0;
      off[(2 * k + 1) * 36 + i] = -2.0;
    }
  Tensor<double> shifted({1, 1, 6, 6});
  for (long y = 0; y < 6; ++y)
    for (long x = 0; x < 6; ++x)
      if (y + 1 < 6 && x - 2 >= 0) shifted.at(0, 0, y, x) = f.at(0, 0, y + 1, x - 2);
  const auto a = deform_conv2d(f, p, OffsetField<double>{off}, spec);
  const auto b = naive_conv2d(shifted, p, spec);
  // Borders differ: the deformable read can land inside the image where the
  // shifted conv sees padding. Interior rows/cols agree exactly.
  for (std::size_t y = 1; y < 4; ++y)
    for (std::size_t x = 3; x < 5; ++x) EXPECT_NEAR(a.at(0, 0, y, x), b.at(0, 0, y, x), 1e-12);
}

TEST(DeformConv, InputGradientIsAdjoint) {
  const auto spec = ConvSpec::same3x3(2, 2);
  const auto f = randn_seeded<double>({1, 2, 5, 5}, 1.0, 7);
  const LayerParams<double> p{randn_seeded<double>({2, 2, 3, 3}, 1.0, 8), {}};
  const OffsetField<double> off{randn_seeded<double>({1, 18, 5, 5}, 0.8, 9)};
  const auto y = deform_conv2d(f, p, off, spec);
  const auto g = randn_seeded<double>(y.shape(), 1.0, 10);
  LayerParams<double> grads = p.zeros_like();
  const auto d = deform_conv2d_backward(f, p, off, spec, g, &grads);
  EXPECT_NEAR(dot(y, g), dot(f, d.input), 1e-10);
  EXPECT_NEAR(dot(y, g), dot(p.weight, grads.weight), 1e-10);
  EXPECT_EQ(d.offset.shape(), off.data.shape());
}

TEST(DeformConv, RejectsBadOffsetShape) {
  const auto spec = ConvSpec::same3x3(1, 1);
  const LayerParams<double> p{Tensor<double>({1, 1, 3, 3}), {}};
  EXPECT_THROW(deform_conv2d(Tensor<double>({1, 1, 4, 4}), p, OffsetField<double>{Tensor<double>({1, 16, 4, 4})}, spec),
               ShapeMismatch);
}

TEST(OffsetField, IsPlainConvolution) {
  const auto f = randn_seeded<double>({1, 3, 5, 6}, 1.0, 11);
  const LayerParams<double> p{randn_seeded<double>({18, 3, 3, 3}, 1.0, 12), randn_seeded<double>({18}, 1.0, 13)};
  const auto o = offset_field(f, p);
  EXPECT_EQ(o.taps(), 9u);
  EXPECT_LT(max_abs_diff(o.data, naive_conv2d(f, p, ConvSpec::same3x3(3, 18))), 1e-12);
}

TEST(RegionGrid, FloorSplitsAndRoundTrip) {
  for (std::size_t h : {8u, 15u, 17u}) {
    for (std::size_t n : {1u, 3u, 4u, 5u}) {
      const auto g = RegionGrid::make(h, h + 2, n);
      ASSERT_EQ(g.row_splits.size(), n + 1);
      for (std::size_t i = 0; i <= n; ++i) {
        EXPECT_EQ(g.row_splits[i], i * h / n);
        EXPECT_EQ(g.col_splits[i], i * (h + 2) / n);
      }
      const auto f = randn_seeded<float>({1, 2, h, h + 2}, 1.0, h * 10 + n);
      RegionGrid grid;
      const auto regions = region_partition(f, n, &grid);
      EXPECT_EQ(regions.size(), n * n);
      EXPECT_EQ(region_reassemble(regions, grid), f);
    }
  }
  EXPECT_THROW(RegionGrid::make(4, 4, 5), InvalidParam);
}

TEST(WeightGenerator, DefaultSpecEmitsPaperFilterSize) {
  const GeneratorSpec spec;
  EXPECT_EQ(spec.spp_features(), 64u * 32u * 32u);
  EXPECT_EQ(spec.filter_size(), 18432u);
  const auto params = make_generator_params<float>(spec);
  ASSERT_EQ(params.fc.size(), 3u);
  EXPECT_EQ(params.fc.back().weight.numel(), grouped_fc_weight_count(512, 18432, 16));
  const auto filt = weight_generator(randn_seeded<float>({64, 9, 11}, 1.0, 1), params, spec);
  EXPECT_EQ(filt.weights.shape(), (Shape{64, 3, 3, 32}));
}

TEST(WeightGenerator, ComposesSppAndFcLayers) {
  const auto spec = small_spec();
  const auto params = random_generator(spec, 3);
  const auto region = randn_seeded<double>({4, 5, 6}, 1.0, 4);
  Tensor<double> h = spp_pool(region, spec.bins, spec.spp_mode).reshape({1, spec.spp_features()});
  h = relu(grouped_fc(h, params.fc[0], spec.groups[0]));
  h = relu(grouped_fc(h, params.fc[1], spec.groups[1]));
  h = grouped_fc(h, params.fc[2], spec.groups[2]);
  const auto filt = weight_generator(region, params, spec);
  EXPECT_LT(max_abs_diff(filt.weights.reshape({1, spec.filter_size()}), h), 1e-12);
}

TEST(AdaptiveConv, EqualsConvWithConvertedWeights) {
  const auto filter = randn_seeded<double>({3, 3, 3, 2}, 1.0, 5);
  const auto region = randn_seeded<double>({1, 3, 4, 7}, 1.0, 6);
  const auto w = filter_to_conv_weight(filter);
  EXPECT_EQ(w.shape(), (Shape{2, 3, 3, 3}));
  EXPECT_EQ(w.at(1, 2, 0, 1), filter.at(2, 0, 1, 1));
  EXPECT_EQ(conv_weight_to_filter(w), filter);
  const auto out = adaptive_conv(region, GeneratedFilter<double>{filter});
  EXPECT_LT(max_abs_diff(out, naive_conv2d(region, LayerParams<double>{w, {}}, ConvSpec::same3x3(3, 2))), 1e-12);
}

TEST(Capm, BranchesEqualPerRegionGeneratedConvs) {
  const auto spec = small_spec();
  const std::vector<std::size_t> grids{2, 3};
  const std::vector<GeneratorParams<double>> params{random_generator(spec, 7), random_generator(spec, 8)};
  const auto f = randn_seeded<double>({2, 4, 9, 8}, 1.0, 9);
  const auto out = capm_forward(f, grids, params, spec);
  ASSERT_EQ(out.shape(), (Shape{2, 4, 9, 8}));
  for (std::size_t b = 0; b < grids.size(); ++b) {
    for (std::size_t s = 0; s < 2; ++s) {
      RegionGrid grid;
      auto regions = region_partition(batch_item(f, s), grids[b], &grid);
      for (auto& r : regions) r = adaptive_conv(r, weight_generator(r, params[b], spec));
      const auto expect = region_reassemble(regions, grid);
      for (std::size_t c = 0; c < spec.out_channels; ++c)
        for (std::size_t y = 0; y < 9; ++y)
          for (std::size_t x = 0; x < 8; ++x)
            EXPECT_NEAR(out.at(s, b * spec.out_channels + c, y, x), expect.at(0, c, y, x), 1e-12);
    }
  }
}

TEST(Capm, ValidatesArguments) {
  const auto spec = small_spec();
  const auto f = Tensor<double>({1, 4, 8, 8});
  EXPECT_THROW(capm_forward(f, {}, std::vector<GeneratorParams<double>>{}, spec), InvalidParam);
  EXPECT_THROW(capm_forward(f, {2, 3}, {random_generator(spec, 1)}, spec), ShapeMismatch);
  EXPECT_THROW(capm_forward(Tensor<double>({1, 3, 8, 8}), {2}, {random_generator(spec, 1)}, spec), ShapeMismatch);
}
