#include "panet/model.hpp"

#include <algorithm>
#include <sstream>

#include "panet/random.hpp"

namespace panet {

FapdVariant parse_fapd_variant(std::string_view s) {
  if (s == "deformable") return FapdVariant::kDeformable;
  if (s == "standard") return FapdVariant::kStandard;
  throw InvalidParam("unknown fapd variant '" + std::string(s) + "' (expected deformable|standard)");
}

std::string_view to_string(FapdVariant v) { return v == FapdVariant::kDeformable ? "deformable" : "standard"; }

OffsetInit parse_offset_init(std::string_view s) {
  if (s == "zero") return OffsetInit::kZero;
  if (s == "normal") return OffsetInit::kNormal;
  throw InvalidParam("unknown offset init '" + std::string(s) + "' (expected zero|normal)");
}

std::string_view to_string(OffsetInit v) { return v == OffsetInit::kZero ? "zero" : "normal"; }

namespace {

constexpr std::size_t kOffsetTaps = 9;
constexpr float kDiscSlope = 0.2f;

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i != 0) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

void require_positive(const std::vector<std::size_t>& v, const char* what) {
  for (std::size_t x : v) {
    if (x == 0) throw InvalidParam(std::string("model config: ") + what + " entries must be >= 1");
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (input_channels == 0 || sketch_channels == 0) throw InvalidParam("model config: channel counts must be >= 1");
  if (fce_channels.size() != 8) throw InvalidParam("model config: fce_channels needs 8 entries");
  if (decoder_channels.size() != 7) throw InvalidParam("model config: decoder_channels needs 7 entries");
  if (disc_channels.size() != 4) throw InvalidParam("model config: disc_channels needs 4 entries");
  require_positive(fce_channels, "fce_channels");
  require_positive(decoder_channels, "decoder_channels");
  require_positive(disc_channels, "disc_channels");
  require_positive(branch_grids, "branch_grids");
  if (!(init_std > 0.0)) throw InvalidParam("model config: init_std must be > 0");
  if (!branch_grids.empty()) generator_spec().validate();
}

GeneratorSpec ModelConfig::generator_spec() const {
  GeneratorSpec s;
  s.in_channels = decoder_channels.at(6);
  s.out_channels = capm_channels;
  s.kernel = 3;
  s.bins = spp_bins;
  s.spp_mode = spp_mode;
  s.hidden = generator_hidden;
  s.groups = generator_groups;
  return s;
}

std::size_t ModelConfig::head_in_channels() const {
  return branch_grids.empty() ? decoder_channels.at(6) : capm_channels * branch_grids.size();
}

std::size_t ModelConfig::min_input_size() const {
  std::size_t m = 8;
  for (std::size_t n : branch_grids) m = std::max(m, (n + 7) / 8 * 8);
  return m;
}

std::string ModelConfig::canonical_text() const {
  std::ostringstream os;
  os << "model.input_channels = " << input_channels << '\n'
     << "model.sketch_channels = " << sketch_channels << '\n'
     << "model.fce_channels = " << join(fce_channels) << '\n'
     << "model.decoder_channels = " << join(decoder_channels) << '\n'
     << "model.branch_grids = " << join(branch_grids) << '\n'
     << "model.fapd_variant = " << to_string(fapd_variant) << '\n'
     << "model.pooling = " << to_string(pooling) << '\n'
     << "model.capm_channels = " << capm_channels << '\n'
     << "model.spp_bins = " << spp_bins << '\n'
     << "model.spp_mode = " << to_string(spp_mode) << '\n'
     << "model.generator_hidden = " << join(generator_hidden) << '\n'
     << "model.generator_groups = " << join(generator_groups) << '\n'
     << "model.disc_channels = " << join(disc_channels) << '\n';
  return os.str();
}

std::uint64_t ModelConfig::digest() const { return fnv1a64(canonical_text()); }

ModelConfig ModelConfig::ablation(std::string_view name) {
  ModelConfig cfg;
  if (name == "full") return cfg;
  if (name == "fapd-sc") {
    cfg.fapd_variant = FapdVariant::kStandard;
    cfg.branch_grids.clear();
    return cfg;
  }
  if (name == "no-capm") {
    cfg.branch_grids.clear();
    return cfg;
  }
  throw InvalidParam("unknown ablation '" + std::string(name) + "' (expected full|fapd-sc|no-capm)");
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
LayerParams<T> conv_layer(std::size_t in, std::size_t out, std::size_t k, bool bias = true) {
  return {Tensor<T>({out, in, k, k}), bias ? Tensor<T>({out}) : Tensor<T>()};
}

template <typename T>
LayerParams<T> tconv_layer(std::size_t in, std::size_t out) {
  return {Tensor<T>({in, out, 4, 4}), Tensor<T>({out})};
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
PANetParams<T> make_params(const ModelConfig& cfg) {
  cfg.validate();
  const auto& e = cfg.fce_channels;
  const auto& d = cfg.decoder_channels;
  const bool deformable = cfg.fapd_variant == FapdVariant::kDeformable;
  PANetParams<T> p;
  auto& g = p.gen;
  for (std::size_t i = 0; i < 8; ++i) g.fce.push_back(conv_layer<T>(i == 0 ? cfg.input_channels : e[i - 1], e[i], 3));

  g.dc1 = conv_layer<T>(e[7], d[0], 3);
  g.tc1 = tconv_layer<T>(d[0], d[1]);
  g.dc2 = conv_layer<T>(d[1] + e[5], d[2], 3);
  g.tc2 = tconv_layer<T>(d[2], d[3]);
  g.tc3 = tconv_layer<T>(d[3] + e[3], d[4]);
  g.sc = conv_layer<T>(d[4] + e[1], d[5], 3);
  g.dc3 = conv_layer<T>(d[5], d[6], 3);
  if (deformable) {
    g.off1 = conv_layer<T>(e[7], 2 * kOffsetTaps, 3);
    g.off2 = conv_layer<T>(d[1] + e[5], 2 * kOffsetTaps, 3);
    g.off3 = conv_layer<T>(d[5], 2 * kOffsetTaps, 3);
  }
  if (!cfg.branch_grids.empty()) {
    const GeneratorSpec spec = cfg.generator_spec();
    for (std::size_t b = 0; b < cfg.branch_grids.size(); ++b) g.capm.push_back(make_generator_params<T>(spec));
  }
  g.head = conv_layer<T>(cfg.head_in_channels(), cfg.sketch_channels, 1);

  const auto& c = cfg.disc_channels;
  p.disc.conv.push_back(conv_layer<T>(cfg.sketch_channels, c[0], 4));
  p.disc.conv.push_back(conv_layer<T>(c[0], c[1], 4, false));
  p.disc.conv.push_back(conv_layer<T>(c[1], c[2], 4, false));
  p.disc.conv.push_back(conv_layer<T>(c[2], c[3], 4, false));
  p.disc.conv.push_back(conv_layer<T>(c[3], 1, 4));
  return p;
}

template <typename T>
PANetParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  PANetParams<T> p = make_params<T>(cfg);
  p.for_each([&](const std::string& path, LayerParams<T>& layer) {
    if (cfg.offset_init == OffsetInit::kZero && ends_with(path, "_offset")) return;
    const std::string key = path + ".weight";
    layer.weight = randn_seeded<T>(layer.weight.shape(), cfg.init_std, seed, fnv1a64(key));
  });
  return p;
}

template <typename T>
ParamCountTable param_count(const PANetParams<T>& params, const ModelConfig& cfg) {
  ParamCountTable table;
  params.for_each([&](const std::string& path, const LayerParams<T>& layer) {
    table.rows.push_back({path, layer.count()});
    (path.rfind("gen.", 0) == 0 ? table.generator_total : table.discriminator_total) += layer.count();
    table.total += layer.count();
  });
  if (!params.gen.capm.empty()) {
    const std::size_t expected = cfg.generator_spec().filter_size();
    for (std::size_t b = 0; b < params.gen.capm.size(); ++b) {
      const auto& head = params.gen.capm[b].fc.back();
      if (head.bias.numel() != expected) {
        throw ShapeMismatch("param_count: CAPM branch " + std::to_string(b + 1) + " generator emits " +
                            std::to_string(head.bias.numel()) + " values, expected " + std::to_string(expected));
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Encoder

namespace {

bool emits_pyramid_level(std::size_t layer) { return layer % 2 == 1; }
bool pools_before(std::size_t layer) { return layer == 2 || layer == 4 || layer == 6; }

template <typename T>
const Tensor<T>& pyramid_level(const FeaturePyramid<T>& p, std::size_t layer) {
  switch (layer) {
    case 1: return p.f_full;
    case 3: return p.f_half;
    case 5: return p.f_quarter;
    default: return p.f_eighth;
  }
}

template <typename T>
Tensor<T>& pyramid_level(FeaturePyramid<T>& p, std::size_t layer) {
  return const_cast<Tensor<T>&>(pyramid_level(static_cast<const FeaturePyramid<T>&>(p), layer));
}

}  // namespace

template <typename T>
FeaturePyramid<T> fce_forward(const Tensor<T>& image, const SynthesisParams<T>& params, const ModelConfig& cfg,
                              FceCache<T>* cache) {
  if (image.rank() != 4 || image.dim(1) != cfg.input_channels) {
    throw ShapeMismatch("fce_forward: expected N x " + std::to_string(cfg.input_channels) + " x H x W image, got " +
                        shape_str(image.shape()));
  }
  if (image.dim(2) % 8 != 0 || image.dim(3) % 8 != 0 || image.dim(2) == 0 || image.dim(3) == 0) {
    throw ShapeMismatch("fce_forward: spatial size " + std::to_string(image.dim(2)) + "x" +
                        std::to_string(image.dim(3)) + " is not a positive multiple of 8");
  }
  if (cache != nullptr) {
    cache->inputs.clear();
    cache->outputs.clear();
  }
  FeaturePyramid<T> pyr;
  Tensor<T> x = image;
  for (std::size_t i = 0; i < 8; ++i) {
    if (pools_before(i)) x = pool2(x, cfg.pooling);
    const std::size_t in = i == 0 ? cfg.input_channels : cfg.fce_channels[i - 1];
    Tensor<T> y = relu(conv2d(x, params.fce[i], ConvSpec::same3x3(in, cfg.fce_channels[i])));
    if (cache != nullptr) {
      cache->inputs.push_back(std::move(x));
      cache->outputs.push_back(y);
    }
    if (emits_pyramid_level(i)) pyramid_level(pyr, i) = y;
    x = std::move(y);
  }
  return pyr;
}

template <typename T>
Tensor<T> fce_backward(const FceCache<T>& cache, const SynthesisParams<T>& params, const ModelConfig& cfg,
                       const FeaturePyramid<T>& grads_in, SynthesisParams<T>* grads, bool need_input_grad) {
  if (cache.inputs.size() != 8) throw InvalidParam("fce_backward: forward cache is empty");
  Tensor<T> g = pyramid_level(grads_in, 7);
  for (std::size_t i = 8; i-- > 0;) {
    if (i < 7 && emits_pyramid_level(i) && !pyramid_level(grads_in, i).empty()) {
      if (g.empty()) {
        g = pyramid_level(grads_in, i);
      } else {
        add_inplace(g, pyramid_level(grads_in, i));
      }
    }
    if (g.empty()) g = Tensor<T>(cache.outputs[i].shape());
    const std::size_t in = i == 0 ? cfg.input_channels : cfg.fce_channels[i - 1];
    const Tensor<T> g_pre = relu_backward(cache.outputs[i], g);
    Tensor<T> gx = conv2d_backward(cache.inputs[i], params.fce[i], ConvSpec::same3x3(in, cfg.fce_channels[i]), g_pre,
                                   grads != nullptr ? &grads->fce[i] : nullptr, i > 0 || need_input_grad);
    if (i == 0) return gx;
    g = pools_before(i) ? pool2_backward(cache.outputs[i - 1], gx, cfg.pooling) : std::move(gx);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Decoder

namespace {

template <typename T>
Tensor<T> dc_forward(const Tensor<T>& x, const LayerParams<T>& p, const LayerParams<T>& off_p, std::size_t out,
                     const ModelConfig& cfg, OffsetField<T>* offsets) {
  const ConvSpec spec = ConvSpec::same3x3(x.dim(1), out);
  if (cfg.fapd_variant == FapdVariant::kStandard) return conv2d(x, p, spec);
  *offsets = offset_field(x, off_p, kOffsetTaps);
  return deform_conv2d(x, p, *offsets, spec);
}

template <typename T>
Tensor<T> dc_backward(const Tensor<T>& x, const LayerParams<T>& p, const LayerParams<T>& off_p,
                      const OffsetField<T>& offsets, std::size_t out, const ModelConfig& cfg, const Tensor<T>& g,
                      LayerParams<T>* grads, LayerParams<T>* off_grads) {
  const ConvSpec spec = ConvSpec::same3x3(x.dim(1), out);
  if (cfg.fapd_variant == FapdVariant::kStandard) return conv2d_backward(x, p, spec, g, grads, true);
  DeformGrads<T> dg = deform_conv2d_backward(x, p, offsets, spec, g, grads);
  add_inplace(dg.input, offset_field_backward(x, off_p, dg.offset, off_grads, true));
  return std::move(dg.input);
}

template <typename T>
LayerParams<T>* field(SynthesisParams<T>* grads, LayerParams<T> SynthesisParams<T>::*member) {
  return grads != nullptr ? &(grads->*member) : nullptr;
}

}  // namespace

template <typename T>
Tensor<T> fapd_forward(const FeaturePyramid<T>& pyr, const SynthesisParams<T>& params, const ModelConfig& cfg,
                       FapdCache<T>* cache) {
  const auto& e = cfg.fce_channels;
  const auto& d = cfg.decoder_channels;
  const Tensor<T>* levels[] = {&pyr.f_full, &pyr.f_half, &pyr.f_quarter, &pyr.f_eighth};
  const std::size_t level_ch[] = {e[1], e[3], e[5], e[7]};
  for (int l = 0; l < 4; ++l) {
    const Tensor<T>& t = *levels[l];
    if (t.rank() != 4 || t.dim(1) != level_ch[l]) {
      throw ShapeMismatch("fapd_forward: pyramid level " + std::to_string(l) + " has shape " + shape_str(t.shape()));
    }
    if (l > 0 && (t.dim(0) != levels[0]->dim(0) || t.dim(2) * (std::size_t{1} << l) != levels[0]->dim(2) ||
                  t.dim(3) * (std::size_t{1} << l) != levels[0]->dim(3))) {
      throw ShapeMismatch("fapd_forward: pyramid level " + std::to_string(l) + " " + shape_str(t.shape()) +
                          " is not a 2x reduction of " + shape_str(levels[0]->shape()));
    }
  }

  FapdCache<T> local;
  FapdCache<T>& c = cache != nullptr ? *cache : local;
  c.x_dc1 = pyr.f_eighth;
  c.y_dc1 = relu(dc_forward(c.x_dc1, params.dc1, params.off1, d[0], cfg, &c.o_dc1));
  c.y_tc1 = relu(conv_transpose2d(c.y_dc1, params.tc1, ConvSpec::upsample2x(d[0], d[1])));
  c.x_dc2 = concat_channels(c.y_tc1, pyr.f_quarter);
  c.y_dc2 = relu(dc_forward(c.x_dc2, params.dc2, params.off2, d[2], cfg, &c.o_dc2));
  c.y_tc2 = relu(conv_transpose2d(c.y_dc2, params.tc2, ConvSpec::upsample2x(d[2], d[3])));
  c.x_tc3 = concat_channels(c.y_tc2, pyr.f_half);
  c.y_tc3 = relu(conv_transpose2d(c.x_tc3, params.tc3, ConvSpec::upsample2x(d[3] + e[3], d[4])));
  c.x_sc = concat_channels(c.y_tc3, pyr.f_full);
  c.y_sc = relu(conv2d(c.x_sc, params.sc, ConvSpec::same3x3(d[4] + e[1], d[5])));
  c.y_dc3 = relu(dc_forward(c.y_sc, params.dc3, params.off3, d[6], cfg, &c.o_dc3));
  return c.y_dc3;
}

template <typename T>
FeaturePyramid<T> fapd_backward(const FapdCache<T>& c, const SynthesisParams<T>& params, const ModelConfig& cfg,
                                const Tensor<T>& grad_out, SynthesisParams<T>* grads) {
  using S = SynthesisParams<T>;
  const auto& e = cfg.fce_channels;
  const auto& d = cfg.decoder_channels;
  FeaturePyramid<T> out;

  Tensor<T> g = relu_backward(c.y_dc3, grad_out);
  g = dc_backward(c.y_sc, params.dc3, params.off3, c.o_dc3, d[6], cfg, g, field(grads, &S::dc3), field(grads, &S::off3));

  g = relu_backward(c.y_sc, g);
  g = conv2d_backward(c.x_sc, params.sc, ConvSpec::same3x3(d[4] + e[1], d[5]), g, field(grads, &S::sc), true);
  auto [g_tc3, g_full] = split_channels(g, d[4]);
  out.f_full = std::move(g_full);

  g = relu_backward(c.y_tc3, g_tc3);
  g = conv_transpose2d_backward(c.x_tc3, params.tc3, ConvSpec::upsample2x(d[3] + e[3], d[4]), g,
                                field(grads, &S::tc3), true);
  auto [g_tc2, g_half] = split_channels(g, d[3]);
  out.f_half = std::move(g_half);

  g = relu_backward(c.y_tc2, g_tc2);
  g = conv_transpose2d_backward(c.y_dc2, params.tc2, ConvSpec::upsample2x(d[2], d[3]), g, field(grads, &S::tc2), true);

  g = relu_backward(c.y_dc2, g);
  g = dc_backward(c.x_dc2, params.dc2, params.off2, c.o_dc2, d[2], cfg, g, field(grads, &S::dc2), field(grads, &S::off2));
  auto [g_tc1, g_quarter] = split_channels(g, d[1]);
  out.f_quarter = std::move(g_quarter);

  g = relu_backward(c.y_tc1, g_tc1);
  g = conv_transpose2d_backward(c.y_dc1, params.tc1, ConvSpec::upsample2x(d[0], d[1]), g, field(grads, &S::tc1), true);

  g = relu_backward(c.y_dc1, g);
  out.f_eighth =
      dc_backward(c.x_dc1, params.dc1, params.off1, c.o_dc1, d[0], cfg, g, field(grads, &S::dc1), field(grads, &S::off1));
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> panet_forward(const Tensor<T>& image, const SynthesisParams<T>& params, const ModelConfig& cfg,
                        PanetCache<T>* cache) {
  if (image.rank() == 4) {
    const std::size_t need = cfg.min_input_size();
    if (image.dim(2) < need || image.dim(3) < need) {
      throw InvalidParam("panet_forward: input " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(3)) +
                         " is smaller than the minimum " + std::to_string(need) + "x" + std::to_string(need));
    }
    if (image.dim(2) % 8 != 0 || image.dim(3) % 8 != 0) {
      throw InvalidParam("panet_forward: input " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(3)) +
                         " is not a multiple of 8 (pad with pad_to_multiple)");
    }
  }
  PanetCache<T> local;
  PanetCache<T>& c = cache != nullptr ? *cache : local;
  c.pyramid = fce_forward(image, params, cfg, cache != nullptr ? &c.fce : nullptr);
  c.fapd_out = fapd_forward(c.pyramid, params, cfg, cache != nullptr ? &c.fapd : nullptr);
  if (cache == nullptr) c.pyramid = {};
  if (cfg.branch_grids.empty()) {
    c.head_in = c.fapd_out;
  } else {
    c.head_in = capm_forward(c.fapd_out, cfg.branch_grids, params.capm, cfg.generator_spec(),
                             cache != nullptr ? &c.capm : nullptr);
  }
  return conv2d(c.head_in, params.head, ConvSpec::pointwise(cfg.head_in_channels(), cfg.sketch_channels));
}

template <typename T>
Tensor<T> panet_backward(const PanetCache<T>& c, const SynthesisParams<T>& params, const ModelConfig& cfg,
                         const Tensor<T>& grad_out, SynthesisParams<T>* grads, bool need_input_grad) {
  Tensor<T> g = conv2d_backward(c.head_in, params.head, ConvSpec::pointwise(cfg.head_in_channels(), cfg.sketch_channels),
                                grad_out, grads != nullptr ? &grads->head : nullptr, true);
  if (!cfg.branch_grids.empty()) {
    g = capm_backward(c.capm, params.capm, cfg.generator_spec(), g, grads != nullptr ? &grads->capm : nullptr);
  }
  const FeaturePyramid<T> gp = fapd_backward(c.fapd, params, cfg, g, grads);
  return fce_backward(c.fce, params, cfg, gp, grads, need_input_grad);
}

// ---------------------------------------------------------------------------

ConvSpec discriminator_layer_spec(const ModelConfig& cfg, std::size_t layer) {
  const auto& c = cfg.disc_channels;
  const std::size_t in[] = {cfg.sketch_channels, c[0], c[1], c[2], c[3]};
  const std::size_t out[] = {c[0], c[1], c[2], c[3], 1};
  const std::size_t stride = layer < 3 ? 2 : 1;
  return {in[layer], out[layer], 4, 4, stride, stride, 1, 1};
}

template <typename T>
Tensor<T> discriminator_forward(const Tensor<T>& sketch, const DiscriminatorParams<T>& params, const ModelConfig& cfg,
                                DiscCache<T>* cache) {
  if (sketch.rank() != 4 || sketch.dim(1) != cfg.sketch_channels) {
    throw ShapeMismatch("discriminator_forward: expected N x " + std::to_string(cfg.sketch_channels) +
                        " x H x W input, got " + shape_str(sketch.shape()));
  }
  if (params.conv.size() != 5) throw ShapeMismatch("discriminator_forward: expected 5 conv layers");
  // Validate the whole geometry before doing any work.
  std::size_t h = sketch.dim(2), w = sketch.dim(3);
  for (std::size_t l = 0; l < 5; ++l) {
    const ConvSpec spec = discriminator_layer_spec(cfg, l);
    try {
      h = spec.out_h(h);
      w = spec.out_w(w);
    } catch (const InvalidParam&) {
      throw InvalidParam("discriminator_forward: input " + std::to_string(sketch.dim(2)) + "x" +
                         std::to_string(sketch.dim(3)) + " is too small (empty score map at layer " +
                         std::to_string(l + 1) + ")");
    }
  }
  if (cache != nullptr) *cache = {};
  Tensor<T> x = sketch;
  for (std::size_t l = 0; l < 5; ++l) {
    Tensor<T> c = conv2d(x, params.conv[l], discriminator_layer_spec(cfg, l));
    if (l == 4) return c;
    Tensor<T> pre = (l == 0) ? c : instance_norm(c);
    Tensor<T> a = leaky_relu(pre, T(kDiscSlope));
    if (cache != nullptr) {
      cache->inputs.push_back(std::move(x));
      cache->conv_out.push_back(std::move(c));
      cache->pre.push_back(std::move(pre));
    }
    x = std::move(a);
  }
  return {};
}

template <typename T>
Tensor<T> discriminator_backward(const DiscCache<T>& cache, const DiscriminatorParams<T>& params,
                                 const ModelConfig& cfg, const Tensor<T>& grad_out, DiscriminatorParams<T>* grads,
                                 bool need_input_grad) {
  if (cache.inputs.size() != 4) throw InvalidParam("discriminator_backward: forward cache is empty");
  // The last conv's input is the final LeakyReLU output.
  const Tensor<T> last_in = leaky_relu(cache.pre[3], T(kDiscSlope));
  Tensor<T> g = conv2d_backward(last_in, params.conv[4], discriminator_layer_spec(cfg, 4), grad_out,
                                grads != nullptr ? &grads->conv[4] : nullptr, true);
  for (std::size_t l = 4; l-- > 0;) {
    g = leaky_relu_backward(cache.pre[l], T(kDiscSlope), g);
    if (l > 0) g = instance_norm_backward(cache.conv_out[l], g);
    g = conv2d_backward(cache.inputs[l], params.conv[l], discriminator_layer_spec(cfg, l), g,
                        grads != nullptr ? &grads->conv[l] : nullptr, l > 0 || need_input_grad);
  }
  return g;
}

#define PANET_INSTANTIATE(T)                                                                                         \
  template PANetParams<T> make_params<T>(const ModelConfig&);                                                        \
  template PANetParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                                         \
  template ParamCountTable param_count<T>(const PANetParams<T>&, const ModelConfig&);                                \
  template FeaturePyramid<T> fce_forward<T>(const Tensor<T>&, const SynthesisParams<T>&, const ModelConfig&,         \
                                            FceCache<T>*);                                                           \
  template Tensor<T> fce_backward<T>(const FceCache<T>&, const SynthesisParams<T>&, const ModelConfig&,              \
                                     const FeaturePyramid<T>&, SynthesisParams<T>*, bool);                           \
  template Tensor<T> fapd_forward<T>(const FeaturePyramid<T>&, const SynthesisParams<T>&, const ModelConfig&,        \
                                     FapdCache<T>*);                                                                 \
  template FeaturePyramid<T> fapd_backward<T>(const FapdCache<T>&, const SynthesisParams<T>&, const ModelConfig&,    \
                                              const Tensor<T>&, SynthesisParams<T>*);                                \
  template Tensor<T> panet_forward<T>(const Tensor<T>&, const SynthesisParams<T>&, const ModelConfig&,               \
                                      PanetCache<T>*);                                                               \
  template Tensor<T> panet_backward<T>(const PanetCache<T>&, const SynthesisParams<T>&, const ModelConfig&,          \
                                       const Tensor<T>&, SynthesisParams<T>*, bool);                                 \
  template Tensor<T> discriminator_forward<T>(const Tensor<T>&, const DiscriminatorParams<T>&, const ModelConfig&,   \
                                              DiscCache<T>*);                                                        \
  template Tensor<T> discriminator_backward<T>(const DiscCache<T>&, const DiscriminatorParams<T>&,                   \
                                               const ModelConfig&, const Tensor<T>&, DiscriminatorParams<T>*, bool);

PANET_INSTANTIATE(float)
PANET_INSTANTIATE(double)

#undef PANET_INSTANTIATE

}  // namespace panet
