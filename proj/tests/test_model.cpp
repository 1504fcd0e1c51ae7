#include <gtest/gtest.h>

#include <set>

#include "panet/gradcheck_suite.hpp"
#include "panet/model.hpp"
#include "panet/random.hpp"

using namespace panet;

namespace {

ModelConfig tiny(std::string_view ablation = "full") {
  ModelConfig cfg = tiny_model_config();
  const ModelConfig a = ModelConfig::ablation(ablation);
  cfg.fapd_variant = a.fapd_variant;
  if (a.branch_grids.empty()) cfg.branch_grids.clear();
  cfg.offset_init = OffsetInit::kZero;
  return cfg;
}

}  // namespace

TEST(Model, TinyForwardShapes) {
  const ModelConfig cfg = tiny();
  const auto params = init_params<float>(cfg, 3);
  const auto img = rand_uniform_seeded<float>({2, 3, 32, 24}, 0, 1, 4);
  PanetCache<float> cache;
  const auto out = panet_forward(img, params.gen, cfg, &cache);
  EXPECT_EQ(out.shape(), (Shape{2, 1, 32, 24}));
  EXPECT_EQ(cache.pyramid.f_full.shape(), (Shape{2, 8, 32, 24}));
  EXPECT_EQ(cache.pyramid.f_eighth.shape(), (Shape{2, 32, 4, 3}));
  EXPECT_EQ(cache.fapd_out.shape(), (Shape{2, cfg.decoder_channels.back(), 32, 24}));
  EXPECT_EQ(cache.head_in.dim(1), cfg.head_in_channels());
  EXPECT_EQ(cfg.head_in_channels(), cfg.capm_channels * cfg.branch_grids.size());
  EXPECT_EQ(cache.fapd.o_dc1.data.shape(), (Shape{2, 18, 4, 3}));
  EXPECT_EQ(cache.fapd.o_dc3.data.shape(), (Shape{2, 18, 32, 24}));
}

TEST(Model, RejectsSizesOffTheGrid) {
  const ModelConfig cfg = tiny();
  const auto params = init_params<float>(cfg, 3);
  EXPECT_THROW(panet_forward(Tensor<float>({1, 3, 20, 24}), params.gen, cfg), InvalidParam);
  EXPECT_THROW(panet_forward(Tensor<float>({1, 1, 24, 24}), params.gen, cfg), ShapeMismatch);
  EXPECT_EQ(ModelConfig{}.min_input_size(), 8u);
}

TEST(Model, ZeroOffsetDecoderEqualsStandardDecoder) {
  // With offsets initialised to zero the deformable decoder is the standard one.
  const ModelConfig def = tiny("no-capm"), sc = tiny("fapd-sc");
  const auto pd = init_params<float>(def, 11);
  const auto ps = init_params<float>(sc, 11);
  EXPECT_EQ(pd.gen.dc2.weight, ps.gen.dc2.weight);
  EXPECT_TRUE(ps.gen.off1.empty());
  const auto img = rand_uniform_seeded<float>({1, 3, 24, 24}, 0, 1, 12);
  const auto a = panet_forward(img, pd.gen, def);
  const auto b = panet_forward(img, ps.gen, sc);
  EXPECT_LT(max_abs_diff(a, b), 1e-5);
}

TEST(Model, AblationParameterCountsDiffer) {
  std::set<std::size_t> totals;
  for (auto name : {"full", "fapd-sc", "no-capm"}) {
    const ModelConfig cfg = ModelConfig::ablation(name);
    const auto table = param_count(make_params<float>(cfg), cfg);
    std::size_t sum = 0;
    for (const auto& r : table.rows) sum += r.count;
    EXPECT_EQ(sum, table.total);
    EXPECT_EQ(table.generator_total + table.discriminator_total, table.total);
    totals.insert(table.generator_total);
  }
  EXPECT_EQ(totals.size(), 3u);
  const ModelConfig sc = ModelConfig::ablation("fapd-sc"), nc = ModelConfig::ablation("no-capm");
  // The deformable variant adds exactly three 3x3 offset convs with 18 outputs.
  const auto t_sc = param_count(make_params<float>(sc), sc).generator_total;
  const auto t_nc = param_count(make_params<float>(nc), nc).generator_total;
  const auto full = make_params<float>(nc);
  const std::size_t offsets = full.gen.off1.count() + full.gen.off2.count() + full.gen.off3.count();
  EXPECT_EQ(t_nc - t_sc, offsets);
  EXPECT_EQ(full.gen.off1.weight.shape()[0], 18u);
  EXPECT_EQ(full.gen.off3.weight.shape()[2], 3u);
}

TEST(Model, InitIsSeededPerTensor) {
  const ModelConfig cfg = tiny();
  const auto a = init_params<float>(cfg, 5), b = init_params<float>(cfg, 5), c = init_params<float>(cfg, 6);
  EXPECT_EQ(a.gen.fce[0].weight, b.gen.fce[0].weight);
  EXPECT_NE(a.gen.fce[0].weight, c.gen.fce[0].weight);
  // Different paths draw from different streams.
  const std::vector<float> head1(a.gen.fce[1].weight.ptr(), a.gen.fce[1].weight.ptr() + 16);
  const std::vector<float> head3(a.gen.fce[3].weight.ptr(), a.gen.fce[3].weight.ptr() + 16);
  EXPECT_NE(head1, head3);
  for (float v : a.gen.off2.weight.data()) EXPECT_EQ(v, 0.0f);
  for (float v : a.gen.fce[3].bias.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Model, DiscriminatorPatchMap) {
  const ModelConfig cfg = tiny();
  const auto params = init_params<float>(cfg, 7);
  const auto d = discriminator_forward(rand_uniform_seeded<float>({2, 1, 64, 64}, 0, 1, 1), params.disc, cfg);
  // Five k4 convs, strides 2,2,2,1,1, pad 1: 64 -> 32 -> 16 -> 8 -> 7 -> 6.
  EXPECT_EQ(d.shape(), (Shape{2, 1, 6, 6}));
  EXPECT_THROW(discriminator_forward(Tensor<float>({1, 1, 16, 16}), params.disc, cfg), InvalidParam);
  EXPECT_TRUE(params.disc.conv[1].bias.empty());
}

TEST(Model, ConfigDigestTracksTopology) {
  const ModelConfig a, b = ModelConfig::ablation("no-capm");
  EXPECT_EQ(a.digest(), ModelConfig{}.digest());
  EXPECT_NE(a.digest(), b.digest());
  EXPECT_THROW(ModelConfig::ablation("tiny"), InvalidParam);
  ModelConfig bad;
  bad.fce_channels.pop_back();
  EXPECT_THROW(bad.validate(), InvalidParam);
}
