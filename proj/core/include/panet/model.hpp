#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "panet/adaptive_ops.hpp"
#include "panet/nn_ops.hpp"
#include "panet/tensor.hpp"

namespace panet {

enum class FapdVariant { kDeformable, kStandard };
enum class OffsetInit { kZero, kNormal };

FapdVariant parse_fapd_variant(std::string_view s);
std::string_view to_string(FapdVariant v);
OffsetInit parse_offset_init(std::string_view s);
std::string_view to_string(OffsetInit v);

struct ModelConfig {
  std::size_t input_channels = 3;
  std::size_t sketch_channels = 1;
  /// Output channels of the eight encoder convolutions.
  std::vector<std::size_t> fce_channels{64, 64, 128, 128, 192, 192, 256, 256};
  /// Output channels of DC1, TC1, DC2, TC2, TC3, SC, DC3 in that order.
  std::vector<std::size_t> decoder_channels{256, 192, 128, 128, 64, 64, 64};
  /// CAPM branch grid sizes. Empty removes CAPM and maps the decoder output
  /// straight to the sketch with a 1x1 conv.
  std::vector<std::size_t> branch_grids{3, 4, 5};
  FapdVariant fapd_variant = FapdVariant::kDeformable;
  PoolMode pooling = PoolMode::kMax;
  std::size_t capm_channels = 32;
  std::size_t spp_bins = 32;
  PoolMode spp_mode = PoolMode::kMax;
  std::vector<std::size_t> generator_hidden{256, 512};
  std::vector<std::size_t> generator_groups{32, 16, 16};
  std::vector<std::size_t> disc_channels{64, 128, 256, 512};
  double init_std = 0.02;
  OffsetInit offset_init = OffsetInit::kZero;

  void validate() const;
  GeneratorSpec generator_spec() const;
  std::size_t head_in_channels() const;
  /// Smallest spatial size accepted by panet_forward: a multiple of 8 no
  /// smaller than any branch grid requires.
  std::size_t min_input_size() const;

  /// Canonical `key = value` text (model.* keys), stable across runs.
  std::string canonical_text() const;
  std::uint64_t digest() const;

  /// Topologies of the three ablation variants.
  static ModelConfig ablation(std::string_view name);
};

/// Encoder outputs at H, H/2, H/4 and H/8.
template <typename T>
struct FeaturePyramid {
  Tensor<T> f_full;
  Tensor<T> f_half;
  Tensor<T> f_quarter;
  Tensor<T> f_eighth;
};

/// Synthesis network parameters. Offset convs are empty in the standard
/// decoder variant; `capm` is empty when no branch grids are configured.
template <typename T>
struct SynthesisParams {
  std::vector<LayerParams<T>> fce;  ///< 8 convolutions
  LayerParams<T> dc1, dc2, dc3;
  LayerParams<T> off1, off2, off3;
  LayerParams<T> tc1, tc2, tc3;
  LayerParams<T> sc;
  std::vector<GeneratorParams<T>> capm;
  LayerParams<T> head;

  /// Visits every layer as fn(path, layer) in a fixed order.
  template <typename Fn>
  void for_each(Fn&& fn);
  template <typename Fn>
  void for_each(Fn&& fn) const;
};

/// PatchGAN discriminator: five k4 convs. Layers 2..4 are instance-normalized
/// and carry no bias.
template <typename T>
struct DiscriminatorParams {
  std::vector<LayerParams<T>> conv;

  template <typename Fn>
  void for_each(Fn&& fn);
  template <typename Fn>
  void for_each(Fn&& fn) const;
};

template <typename T>
struct PANetParams {
  SynthesisParams<T> gen;
  DiscriminatorParams<T> disc;

  /// Visits gen.* then disc.* layers.
  template <typename Fn>
  void for_each(Fn&& fn) {
    gen.for_each(fn);
    disc.for_each(fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    gen.for_each(fn);
    disc.for_each(fn);
  }

  PANetParams zeros_like() const;
  template <typename U>
  PANetParams<U> cast() const;
};

/// Zero-filled parameters with the shapes implied by `cfg`.
template <typename T>
PANetParams<T> make_params(const ModelConfig& cfg);

/// Weights ~ Normal(0, init_std^2), biases 0, offset convs per `offset_init`.
/// Each tensor draws from its own stream keyed by its registry path.
template <typename T>
PANetParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

struct ParamCountRow {
  std::string path;
  std::size_t count = 0;
};

struct ParamCountTable {
  std::vector<ParamCountRow> rows;
  std::size_t generator_total = 0;
  std::size_t discriminator_total = 0;
  std::size_t total = 0;
};

/// Per-layer counts. Throws ShapeMismatch if a CAPM generator head does not
/// emit exactly in*k*k*out values.
template <typename T>
ParamCountTable param_count(const PANetParams<T>& params, const ModelConfig& cfg);

// ---------------------------------------------------------------------------

template <typename T>
struct FceCache {
  std::vector<Tensor<T>> inputs;   ///< input of each conv
  std::vector<Tensor<T>> outputs;  ///< post-ReLU output of each conv
};

template <typename T>
FeaturePyramid<T> fce_forward(const Tensor<T>& image, const SynthesisParams<T>& params, const ModelConfig& cfg,
                              FceCache<T>* cache = nullptr);

/// Returns d loss / d image (empty when `need_input_grad` is false).
template <typename T>
Tensor<T> fce_backward(const FceCache<T>& cache, const SynthesisParams<T>& params, const ModelConfig& cfg,
                       const FeaturePyramid<T>& grads_in, SynthesisParams<T>* grads, bool need_input_grad);

template <typename T>
struct FapdCache {
  Tensor<T> x_dc1, y_dc1;
  OffsetField<T> o_dc1;
  Tensor<T> y_tc1;
  Tensor<T> x_dc2, y_dc2;
  OffsetField<T> o_dc2;
  Tensor<T> y_tc2;
  Tensor<T> x_tc3, y_tc3;
  Tensor<T> x_sc, y_sc;
  Tensor<T> y_dc3;
  OffsetField<T> o_dc3;
};

template <typename T>
Tensor<T> fapd_forward(const FeaturePyramid<T>& pyr, const SynthesisParams<T>& params, const ModelConfig& cfg,
                       FapdCache<T>* cache = nullptr);

template <typename T>
FeaturePyramid<T> fapd_backward(const FapdCache<T>& cache, const SynthesisParams<T>& params, const ModelConfig& cfg,
                                const Tensor<T>& grad_out, SynthesisParams<T>* grads);

template <typename T>
struct PanetCache {
  FceCache<T> fce;
  FeaturePyramid<T> pyramid;
  FapdCache<T> fapd;
  Tensor<T> fapd_out;
  CapmCache<T> capm;
  Tensor<T> head_in;
};

/// image N x C x H x W with H, W multiples of 8 and >= every branch grid.
template <typename T>
Tensor<T> panet_forward(const Tensor<T>& image, const SynthesisParams<T>& params, const ModelConfig& cfg,
                        PanetCache<T>* cache = nullptr);

template <typename T>
Tensor<T> panet_backward(const PanetCache<T>& cache, const SynthesisParams<T>& params, const ModelConfig& cfg,
                         const Tensor<T>& grad_out, SynthesisParams<T>* grads, bool need_input_grad = false);

// ---------------------------------------------------------------------------

ConvSpec discriminator_layer_spec(const ModelConfig& cfg, std::size_t layer);

template <typename T>
struct DiscCache {
  std::vector<Tensor<T>> inputs;  ///< input of each conv
  std::vector<Tensor<T>> pre;     ///< value fed to each LeakyReLU
  std::vector<Tensor<T>> conv_out;
};

/// N x 1 x H x W sketch -> N x 1 x h x w patch scores (no sigmoid). Throws
/// InvalidParam when the input is too small to yield a non-empty map.
template <typename T>
Tensor<T> discriminator_forward(const Tensor<T>& sketch, const DiscriminatorParams<T>& params,
                                const ModelConfig& cfg, DiscCache<T>* cache = nullptr);

template <typename T>
Tensor<T> discriminator_backward(const DiscCache<T>& cache, const DiscriminatorParams<T>& params,
                                 const ModelConfig& cfg, const Tensor<T>& grad_out, DiscriminatorParams<T>* grads,
                                 bool need_input_grad = true);

// ---------------------------------------------------------------------------

template <typename T>
template <typename Fn>
void SynthesisParams<T>::for_each(Fn&& fn) {
  for (std::size_t i = 0; i < fce.size(); ++i) fn("gen.fce.conv" + std::to_string(i + 1), fce[i]);
  fn(std::string("gen.fapd.dc1"), dc1);
  if (!off1.empty()) fn(std::string("gen.fapd.dc1_offset"), off1);
  fn(std::string("gen.fapd.tc1"), tc1);
  fn(std::string("gen.fapd.dc2"), dc2);
  if (!off2.empty()) fn(std::string("gen.fapd.dc2_offset"), off2);
  fn(std::string("gen.fapd.tc2"), tc2);
  fn(std::string("gen.fapd.tc3"), tc3);
  fn(std::string("gen.fapd.sc"), sc);
  fn(std::string("gen.fapd.dc3"), dc3);
  if (!off3.empty()) fn(std::string("gen.fapd.dc3_offset"), off3);
  for (std::size_t b = 0; b < capm.size(); ++b) {
    for (std::size_t l = 0; l < capm[b].fc.size(); ++l) {
      fn("gen.capm.branch" + std::to_string(b + 1) + ".fc" + std::to_string(l + 1), capm[b].fc[l]);
    }
  }
  fn(std::string("gen.head"), head);
}

template <typename T>
template <typename Fn>
void SynthesisParams<T>::for_each(Fn&& fn) const {
  const_cast<SynthesisParams<T>*>(this)->for_each(
      [&](const std::string& path, LayerParams<T>& p) { fn(path, static_cast<const LayerParams<T>&>(p)); });
}

template <typename T>
template <typename Fn>
void DiscriminatorParams<T>::for_each(Fn&& fn) {
  for (std::size_t i = 0; i < conv.size(); ++i) fn("disc.conv" + std::to_string(i + 1), conv[i]);
}

template <typename T>
template <typename Fn>
void DiscriminatorParams<T>::for_each(Fn&& fn) const {
  for (std::size_t i = 0; i < conv.size(); ++i) fn("disc.conv" + std::to_string(i + 1), conv[i]);
}

template <typename T>
PANetParams<T> PANetParams<T>::zeros_like() const {
  PANetParams<T> z = *this;
  z.for_each([](const std::string&, LayerParams<T>& p) {
    p.weight.fill(T(0));
    p.bias.fill(T(0));
  });
  return z;
}

template <typename T>
template <typename U>
PANetParams<U> PANetParams<T>::cast() const {
  auto cast_layer = [](const LayerParams<T>& p) { return LayerParams<U>{p.weight.template cast<U>(), p.bias.template cast<U>()}; };
  PANetParams<U> out;
  for (const auto& l : gen.fce) out.gen.fce.push_back(cast_layer(l));
  out.gen.dc1 = cast_layer(gen.dc1);
  out.gen.dc2 = cast_layer(gen.dc2);
  out.gen.dc3 = cast_layer(gen.dc3);
  out.gen.off1 = cast_layer(gen.off1);
  out.gen.off2 = cast_layer(gen.off2);
  out.gen.off3 = cast_layer(gen.off3);
  out.gen.tc1 = cast_layer(gen.tc1);
  out.gen.tc2 = cast_layer(gen.tc2);
  out.gen.tc3 = cast_layer(gen.tc3);
  out.gen.sc = cast_layer(gen.sc);
  for (const auto& b : gen.capm) {
    GeneratorParams<U> g;
    for (const auto& l : b.fc) g.fc.push_back(cast_layer(l));
    out.gen.capm.push_back(std::move(g));
  }
  out.gen.head = cast_layer(gen.head);
  for (const auto& l : disc.conv) out.disc.conv.push_back(cast_layer(l));
  return out;
}

}  // namespace panet
