#include <benchmark/benchmark.h>

#include "panet/adaptive_ops.hpp"
#include "panet/dataset.hpp"
#include "panet/metrics.hpp"
#include "panet/random.hpp"
#include "panet/train.hpp"

using namespace panet;

namespace {

// Decoder-sized layer: C -> C channels at H x H.
void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), h = static_cast<std::size_t>(state.range(1));
  const auto spec = ConvSpec::same3x3(c, c);
  const auto x = randn_seeded<float>({1, c, h, h}, 1.0, 1);
  const LayerParams<float> p{randn_seeded<float>({c, c, 3, 3}, 0.05, 2), Tensor<float>({c})};
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p, spec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * c * c * 9 * h * h));
}
BENCHMARK(BM_Conv2d)->Args({64, 64})->Args({128, 32})->Args({256, 15})->Unit(benchmark::kMillisecond);

void BM_DeformConv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), h = static_cast<std::size_t>(state.range(1));
  const auto spec = ConvSpec::same3x3(c, c);
  const auto x = randn_seeded<float>({1, c, h, h}, 1.0, 1);
  const LayerParams<float> p{randn_seeded<float>({c, c, 3, 3}, 0.05, 2), Tensor<float>({c})};
  const OffsetField<float> off{randn_seeded<float>({1, 18, h, h}, 1.0, 3)};
  for (auto _ : state) benchmark::DoNotOptimize(deform_conv2d(x, p, off, spec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * c * c * 9 * h * h));
}
BENCHMARK(BM_DeformConv2d)->Args({64, 64})->Args({256, 15})->Unit(benchmark::kMillisecond);

void BM_DeformConv2dBackward(benchmark::State& state) {
  const std::size_t c = 64, h = 64;
  const auto spec = ConvSpec::same3x3(c, c);
  const auto x = randn_seeded<float>({1, c, h, h}, 1.0, 1);
  const LayerParams<float> p{randn_seeded<float>({c, c, 3, 3}, 0.05, 2), Tensor<float>({c})};
  const OffsetField<float> off{randn_seeded<float>({1, 18, h, h}, 1.0, 3)};
  const auto g = randn_seeded<float>({1, c, h, h}, 1.0, 4);
  LayerParams<float> grads = p.zeros_like();
  for (auto _ : state) benchmark::DoNotOptimize(deform_conv2d_backward(x, p, off, spec, g, &grads));
}
BENCHMARK(BM_DeformConv2dBackward)->Unit(benchmark::kMillisecond);

// Default CAPM (grids 3,4,5) on a 64-channel decoder output.
void BM_CapmForward(benchmark::State& state) {
  const ModelConfig cfg;
  const auto h = static_cast<std::size_t>(state.range(0));
  const auto params = init_params<float>(cfg, 1);
  const auto f = rand_uniform_seeded<float>({1, 64, h, h}, 0, 1, 2);
  for (auto _ : state) benchmark::DoNotOptimize(capm_forward(f, cfg.branch_grids, params.gen.capm, cfg.generator_spec()));
}
BENCHMARK(BM_CapmForward)->Arg(64)->Arg(120)->Unit(benchmark::kMillisecond);

void BM_PanetForward(benchmark::State& state) {
  const ModelConfig cfg;
  const auto h = static_cast<std::size_t>(state.range(0));
  const auto params = init_params<float>(cfg, 1);
  const auto img = rand_uniform_seeded<float>({1, 3, h, h}, 0, 1, 2);
  for (auto _ : state) benchmark::DoNotOptimize(panet_forward(img, params.gen, cfg));
}
BENCHMARK(BM_PanetForward)->Arg(64)->Arg(120)->Unit(benchmark::kMillisecond);

// One full generator + discriminator optimisation step on a 64x64 pair.
void BM_TrainStep(benchmark::State& state) {
  RunConfig cfg;
  cfg.model = ModelConfig::ablation(state.range(0) == 0 ? "full" : state.range(0) == 1 ? "no-capm" : "fapd-sc");
  std::vector<TrainPair> data;
  auto [p, s] = synth_pair(1, 0, 64);
  data.push_back({"0", p.reshape({1, 3, 64, 64}), s.reshape({1, 1, 64, 64})});
  Trainer t(cfg, data);
  t.initialize();
  for (auto _ : state) benchmark::DoNotOptimize(t.step());
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_Metrics(benchmark::State& state) {
  const GrayImage a = to_gray(synth_pair(1, 0, 128).second), b = gaussian_blur(a, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ssim(a, b));
    benchmark::DoNotOptimize(fsim(a, b));
    benchmark::DoNotOptimize(scoot(a, b));
  }
}
BENCHMARK(BM_Metrics)->Unit(benchmark::kMillisecond);

}  // namespace

// libbenchmark_main on some distros carries LTO bytecode from another GCC.
BENCHMARK_MAIN();
