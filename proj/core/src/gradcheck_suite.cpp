#include "panet/gradcheck_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>

#include "panet/adaptive_ops.hpp"
#include "panet/error.hpp"
#include "panet/nn_ops.hpp"
#include "panet/random.hpp"

namespace panet {

namespace {

using T = double;

Tensor<T> randn(Shape shape, double std, std::uint64_t seed, std::uint64_t stream) {
  return randn_seeded<T>(std::move(shape), std, seed, stream);
}

// Distinct values spaced 0.1 apart in shuffled order, so max-style ops have
// no near-ties within the finite-difference step.
Tensor<T> tie_free(Shape shape, std::uint64_t seed, std::uint64_t stream) {
  Tensor<T> t(std::move(shape));
  std::vector<std::size_t> perm(t.numel());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const CounterRng rng(seed, stream);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i, i)]);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = 0.1 * (static_cast<double>(perm[i]) - 0.5 * static_cast<double>(t.numel()));
  return t;
}

// Keeps every value at least `margin` away from an integer, so bilinear reads
// stay off the kinks of the interpolation weights.
void off_integer(Tensor<T>& t, double margin = 0.02) {
  for (auto& v : t.data()) {
    const double frac = v - std::floor(v);
    if (frac < margin) v += margin;
    if (frac > 1 - margin) v -= margin;
  }
}

template <typename P>
std::vector<Tensor<T>*> param_tensors(P& params, std::vector<std::string>* names) {
  std::vector<Tensor<T>*> out;
  params.for_each([&](const auto& path, LayerParams<T>& l) {
    if (!l.weight.empty()) {
      out.push_back(&l.weight);
      if (names) names->push_back(std::string(path) + ".weight");
    }
    if (!l.bias.empty()) {
      out.push_back(&l.bias);
      if (names) names->push_back(std::string(path) + ".bias");
    }
  });
  return out;
}

// Zero biases leave units fed only by zeros (dead ReLU areas, padding) at
// exactly 0, i.e. on the ReLU kink, where one-sided and central differences
// disagree. Small random biases move them off it.
template <typename P>
void randomize_biases(P& params, std::uint64_t seed) {
  std::uint64_t stream = 70;
  params.for_each([&](const auto&, LayerParams<T>& l) {
    if (!l.bias.empty()) l.bias = randn(l.bias.shape(), 0.1, seed, stream);
    ++stream;
  });
}

void assign(const std::vector<Tensor<T>*>& dst, const TensorList& src, std::size_t first) {
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = src[first + i];
}

TensorList copy_out(const std::vector<Tensor<T>*>& src) {
  TensorList out;
  for (const auto* t : src) out.push_back(*t);
  return out;
}

struct CaseDef {
  std::string name;
  std::string op;
  bool model = false;  ///< judged against the end-to-end tolerance
  std::function<std::pair<DifferentiableOp, TensorList>(std::uint64_t)> build;
  std::size_t max_probes = 0;
  /// Deep ReLU stacks: a bias step moves thousands of units at once, so the
  /// step must be small enough not to straddle a kink.
  double rel_step = 1e-5;
};

std::pair<DifferentiableOp, TensorList> conv_case(ConvSpec spec, std::size_t h, std::size_t w, std::uint64_t seed,
                                                  bool transposed) {
  DifferentiableOp op;
  op.input_names = {"x", "weight", "bias"};
  const Shape wshape = transposed ? Shape{spec.in_channels, spec.out_channels, spec.kernel_h, spec.kernel_w}
                                  : Shape{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
  op.forward = [spec, transposed](const TensorList& in) {
    const LayerParams<T> p{in[1], in[2]};
    return transposed ? conv_transpose2d(in[0], p, spec) : conv2d(in[0], p, spec);
  };
  op.backward = [spec, transposed](const TensorList& in, const Tensor<T>& g) {
    const LayerParams<T> p{in[1], in[2]};
    LayerParams<T> grads = p.zeros_like();
    Tensor<T> gx = transposed ? conv_transpose2d_backward(in[0], p, spec, g, &grads)
                              : conv2d_backward(in[0], p, spec, g, &grads);
    return TensorList{gx, grads.weight, grads.bias};
  };
  return {op, {randn({1, spec.in_channels, h, w}, 1.0, seed, 1), randn(wshape, 0.5, seed, 2),
               randn({spec.out_channels}, 0.5, seed, 3)}};
}

std::vector<CaseDef> case_defs() {
  std::vector<CaseDef> defs;

  defs.push_back({"conv2d 3x3 s1 p1", "conv2d", false, [](std::uint64_t seed) {
                    return conv_case(ConvSpec::same3x3(2, 3), 5, 6, seed, false);
                  }});
  defs.push_back({"conv2d 4x4 s2 p1", "conv2d", false, [](std::uint64_t seed) {
                    return conv_case(ConvSpec{2, 3, 4, 4, 2, 2, 1, 1}, 6, 8, seed, false);
                  }});
  defs.push_back({"conv_transpose2d 4x4 s2", "conv_transpose2d", false, [](std::uint64_t seed) {
                    return conv_case(ConvSpec::upsample2x(2, 3), 4, 3, seed, true);
                  }});

  defs.push_back({"maxpool2", "maxpool2", false, [](std::uint64_t seed) {
                    DifferentiableOp op;
                    op.input_names = {"x"};
                    op.forward = [](const TensorList& in) { return maxpool2(in[0]); };
                    op.backward = [](const TensorList& in, const Tensor<T>& g) {
                      return TensorList{maxpool2_backward(in[0], g)};
                    };
                    return std::pair{op, TensorList{tie_free({1, 2, 6, 4}, seed, 4)}};
                  }});

  defs.push_back({"bilinear_sample", "bilinear_sample", false, [](std::uint64_t seed) {
                    // Points as rows of (channel-agnostic) y, x; several straddle the border.
                    DifferentiableOp op;
                    op.input_names = {"f", "points"};
                    op.forward = [](const TensorList& in) {
                      const std::size_t n = in[1].dim(0), c = in[0].dim(1);
                      Tensor<T> out({n * c});
                      for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t ch = 0; ch < c; ++ch) {
                          out[i * c + ch] = bilinear_sample(in[0], ch, in[1][2 * i], in[1][2 * i + 1]);
                        }
                      }
                      return out;
                    };
                    op.backward = [](const TensorList& in, const Tensor<T>& g) {
                      const std::size_t n = in[1].dim(0), c = in[0].dim(1);
                      Tensor<T> gf(in[0].shape()), gp(in[1].shape());
                      for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t ch = 0; ch < c; ++ch) {
                          const T gi = g[i * c + ch];
                          const auto d = bilinear_sample_grad(in[0], ch, in[1][2 * i], in[1][2 * i + 1]);
                          gp[2 * i] += gi * d.dy;
                          gp[2 * i + 1] += gi * d.dx;
                          bilinear_sample_backward(gf, ch, in[1][2 * i], in[1][2 * i + 1], gi);
                        }
                      }
                      return TensorList{gf, gp};
                    };
                    Tensor<T> pts = rand_uniform_seeded<T>({12, 2}, -0.8, 4.8, seed, 5);
                    off_integer(pts);
                    return std::pair{op, TensorList{randn({1, 2, 4, 5}, 1.0, seed, 6), pts}};
                  }});

  defs.push_back({"deform_conv2d (input, weights, offsets)", "deform_conv", false, [](std::uint64_t seed) {
                    const ConvSpec spec = ConvSpec::same3x3(2, 3);
                    DifferentiableOp op;
                    op.input_names = {"f", "weight", "bias", "offsets"};
                    op.forward = [spec](const TensorList& in) {
                      return deform_conv2d(in[0], LayerParams<T>{in[1], in[2]}, OffsetField<T>{in[3]}, spec);
                    };
                    op.backward = [spec](const TensorList& in, const Tensor<T>& g) {
                      const LayerParams<T> p{in[1], in[2]};
                      LayerParams<T> grads = p.zeros_like();
                      auto d = deform_conv2d_backward(in[0], p, OffsetField<T>{in[3]}, spec, g, &grads);
                      return TensorList{d.input, grads.weight, grads.bias, d.offset};
                    };
                    Tensor<T> off = randn({1, 18, 5, 5}, 0.8, seed, 7);
                    off_integer(off);
                    return std::pair{op, TensorList{randn({1, 2, 5, 5}, 1.0, seed, 8), randn({3, 2, 3, 3}, 0.5, seed, 9),
                                                    randn({3}, 0.5, seed, 10), off}};
                  }});

  defs.push_back({"offset_field -> deform_conv2d", "deform_conv", false, [](std::uint64_t seed) {
                    const ConvSpec spec = ConvSpec::same3x3(2, 3);
                    DifferentiableOp op;
                    op.input_names = {"f", "offset.weight", "offset.bias", "weight", "bias"};
                    op.forward = [spec](const TensorList& in) {
                      const auto off = offset_field(in[0], LayerParams<T>{in[1], in[2]});
                      return deform_conv2d(in[0], LayerParams<T>{in[3], in[4]}, off, spec);
                    };
                    op.backward = [spec](const TensorList& in, const Tensor<T>& g) {
                      const LayerParams<T> po{in[1], in[2]}, pd{in[3], in[4]};
                      LayerParams<T> go = po.zeros_like(), gd = pd.zeros_like();
                      const auto off = offset_field(in[0], po);
                      auto d = deform_conv2d_backward(in[0], pd, off, spec, g, &gd);
                      Tensor<T> gf = offset_field_backward(in[0], po, d.offset, &go);
                      for (std::size_t i = 0; i < gf.numel(); ++i) gf[i] += d.input[i];
                      return TensorList{gf, go.weight, go.bias, gd.weight, gd.bias};
                    };
                    return std::pair{op, TensorList{randn({1, 2, 5, 5}, 1.0, seed, 11), randn({18, 2, 3, 3}, 0.3, seed, 12),
                                                    randn({18}, 0.3, seed, 13), randn({3, 2, 3, 3}, 0.5, seed, 14),
                                                    randn({3}, 0.5, seed, 15)}};
                  }});

  for (const PoolMode mode : {PoolMode::kMax, PoolMode::kMean}) {
    defs.push_back({std::string("spp_pool ") + std::string(to_string(mode)), "spp_pool", false,
                    [mode](std::uint64_t seed) {
                      DifferentiableOp op;
                      op.input_names = {"region"};
                      op.forward = [mode](const TensorList& in) { return spp_pool(in[0], 3, mode); };
                      op.backward = [mode](const TensorList& in, const Tensor<T>& g) {
                        return TensorList{spp_pool_backward(in[0], 3, mode, g)};
                      };
                      return std::pair{op, TensorList{tie_free({2, 5, 7}, seed, 16)}};
                    }});
  }

  defs.push_back({"grouped_fc", "grouped_fc", false, [](std::uint64_t seed) {
                    DifferentiableOp op;
                    op.input_names = {"x", "weight", "bias"};
                    op.forward = [](const TensorList& in) { return grouped_fc(in[0], LayerParams<T>{in[1], in[2]}, 2); };
                    op.backward = [](const TensorList& in, const Tensor<T>& g) {
                      const LayerParams<T> p{in[1], in[2]};
                      LayerParams<T> grads = p.zeros_like();
                      Tensor<T> gx = grouped_fc_backward(in[0], p, 2, g, &grads);
                      return TensorList{gx, grads.weight, grads.bias};
                    };
                    return std::pair{op, TensorList{randn({3, 8}, 1.0, seed, 17), randn({2, 3, 4}, 0.5, seed, 18),
                                                    randn({6}, 0.5, seed, 19)}};
                  }});

  defs.push_back({"weight_generator", "weight_generator", false, [](std::uint64_t seed) {
                    GeneratorSpec spec;
                    spec.in_channels = 2;
                    spec.out_channels = 2;
                    spec.bins = 2;
                    spec.hidden = {8, 8};
                    spec.groups = {2, 2, 2};
                    auto shapes = make_generator_params<T>(spec);
                    DifferentiableOp op;
                    op.input_names = {"region"};
                    for (std::size_t l = 0; l < shapes.fc.size(); ++l) {
                      op.input_names.push_back("fc" + std::to_string(l + 1) + ".weight");
                      op.input_names.push_back("fc" + std::to_string(l + 1) + ".bias");
                    }
                    auto unpack = [](const TensorList& in, std::size_t layers) {
                      GeneratorParams<T> p;
                      for (std::size_t l = 0; l < layers; ++l) p.fc.push_back({in[1 + 2 * l], in[2 + 2 * l]});
                      return p;
                    };
                    const std::size_t layers = shapes.fc.size();
                    op.forward = [spec, unpack, layers](const TensorList& in) {
                      return weight_generator(in[0], unpack(in, layers), spec).weights;
                    };
                    op.backward = [spec, unpack, layers](const TensorList& in, const Tensor<T>& g) {
                      const auto p = unpack(in, layers);
                      auto grads = p.zeros_like();
                      TensorList out{weight_generator_backward(in[0], p, spec, g, &grads)};
                      for (const auto& l : grads.fc) {
                        out.push_back(l.weight);
                        out.push_back(l.bias);
                      }
                      return out;
                    };
                    TensorList inputs{tie_free({1, 2, 6, 6}, seed, 20)};
                    for (auto& t : inputs[0].data()) t *= 0.3;
                    for (std::size_t l = 0; l < layers; ++l) {
                      inputs.push_back(randn(shapes.fc[l].weight.shape(), 0.5, seed, 21 + 2 * l));
                      inputs.push_back(randn(shapes.fc[l].bias.shape(), 0.5, seed, 22 + 2 * l));
                    }
                    return std::pair{op, inputs};
                  }});

  defs.push_back({"adaptive_conv", "adaptive_conv", false, [](std::uint64_t seed) {
                    DifferentiableOp op;
                    op.input_names = {"region", "filter"};
                    op.forward = [](const TensorList& in) { return adaptive_conv(in[0], GeneratedFilter<T>{in[1]}); };
                    op.backward = [](const TensorList& in, const Tensor<T>& g) {
                      auto d = adaptive_conv_backward(in[0], GeneratedFilter<T>{in[1]}, g);
                      return TensorList{d.region, d.filter};
                    };
                    return std::pair{op, TensorList{randn({1, 2, 5, 5}, 1.0, seed, 30), randn({2, 3, 3, 3}, 0.5, seed, 31)}};
                  }});

  defs.push_back({"capm 1x64x15x15 grids [3,5]", "capm", false, [](std::uint64_t seed) {
                    ModelConfig cfg;
                    const GeneratorSpec spec = cfg.generator_spec();
                    const std::vector<std::size_t> grids{3, 5};
                    const std::size_t layers = spec.hidden.size() + 1;
                    DifferentiableOp op;
                    op.input_names = {"f"};
                    TensorList inputs{randn({1, spec.in_channels, 15, 15}, 1.0, seed, 40)};
                    for (std::size_t b = 0; b < grids.size(); ++b) {
                      const auto shapes = make_generator_params<T>(spec);
                      for (std::size_t l = 0; l < layers; ++l) {
                        const auto prefix = "branch" + std::to_string(b + 1) + ".fc" + std::to_string(l + 1);
                        op.input_names.push_back(prefix + ".weight");
                        op.input_names.push_back(prefix + ".bias");
                        // Scaled so each layer roughly preserves activation magnitude.
                        const double fan_in = static_cast<double>(shapes.fc[l].weight.dim(2));
                        inputs.push_back(randn(shapes.fc[l].weight.shape(), 1.0 / std::sqrt(fan_in), seed, 41 + 10 * b + 2 * l));
                        inputs.push_back(randn(shapes.fc[l].bias.shape(), 0.1, seed, 42 + 10 * b + 2 * l));
                      }
                    }
                    auto unpack = [layers, n = grids.size()](const TensorList& in) {
                      std::vector<GeneratorParams<T>> ps(n);
                      for (std::size_t b = 0; b < n; ++b) {
                        for (std::size_t l = 0; l < layers; ++l) {
                          const std::size_t i = 1 + 2 * (b * layers + l);
                          ps[b].fc.push_back({in[i], in[i + 1]});
                        }
                      }
                      return ps;
                    };
                    op.forward = [=](const TensorList& in) { return capm_forward(in[0], grids, unpack(in), spec); };
                    op.backward = [=](const TensorList& in, const Tensor<T>& g) {
                      const auto ps = unpack(in);
                      std::vector<GeneratorParams<T>> grads;
                      for (const auto& p : ps) grads.push_back(p.zeros_like());
                      CapmCache<T> cache;
                      capm_forward(in[0], grids, ps, spec, &cache);
                      TensorList out{capm_backward(cache, ps, spec, g, &grads)};
                      for (const auto& gp : grads) {
                        for (const auto& l : gp.fc) {
                          out.push_back(l.weight);
                          out.push_back(l.bias);
                        }
                      }
                      return out;
                    };
                    return std::pair{op, inputs};
                  },
                  24});

  defs.push_back({"discriminator 24x24", "discriminator", false, [](std::uint64_t seed) {
                    const ModelConfig cfg = tiny_model_config();
                    auto base = std::make_shared<PANetParams<T>>(init_params<T>(cfg, seed));
                    randomize_biases(base->disc, seed);
                    std::vector<std::string> names;
                    auto tensors = param_tensors(base->disc, &names);
                    DifferentiableOp op;
                    op.input_names = {"sketch"};
                    op.input_names.insert(op.input_names.end(), names.begin(), names.end());
                    op.forward = [cfg, base](const TensorList& in) {
                      DiscriminatorParams<T> p = base->disc;
                      assign(param_tensors(p, nullptr), in, 1);
                      return discriminator_forward(in[0], p, cfg);
                    };
                    op.backward = [cfg, base](const TensorList& in, const Tensor<T>& g) {
                      DiscriminatorParams<T> p = base->disc;
                      assign(param_tensors(p, nullptr), in, 1);
                      DiscriminatorParams<T> grads = base->zeros_like().disc;
                      DiscCache<T> cache;
                      discriminator_forward(in[0], p, cfg, &cache);
                      TensorList out{discriminator_backward(cache, p, cfg, g, &grads)};
                      for (auto& t : copy_out(param_tensors(grads, nullptr))) out.push_back(std::move(t));
                      return out;
                    };
                    TensorList inputs{rand_uniform_seeded<T>({1, cfg.sketch_channels, 24, 24}, 0.0, 1.0, seed, 50)};
                    for (auto& t : copy_out(tensors)) inputs.push_back(std::move(t));
                    return std::pair{op, inputs};
                  },
                  32, 1e-7});

  defs.push_back({"synthesis network 24x24 (tiny)", "panet", true, [](std::uint64_t seed) {
                    const ModelConfig cfg = tiny_model_config();
                    auto base = std::make_shared<PANetParams<T>>(init_params<T>(cfg, seed));
                    randomize_biases(base->gen, seed);
                    // Zero offsets over a dead area would read exactly on integer
                    // positions, where bilinear sampling has a kink.
                    std::uint64_t stream = 90;
                    for (auto* off : {&base->gen.off1, &base->gen.off2, &base->gen.off3}) {
                      off->bias = randn(off->bias.shape(), 0.5, seed, stream++);
                      off_integer(off->bias, 0.05);
                    }
                    std::vector<std::string> names;
                    auto tensors = param_tensors(base->gen, &names);
                    DifferentiableOp op;
                    op.input_names = {"photo"};
                    op.input_names.insert(op.input_names.end(), names.begin(), names.end());
                    op.forward = [cfg, base](const TensorList& in) {
                      SynthesisParams<T> p = base->gen;
                      assign(param_tensors(p, nullptr), in, 1);
                      return panet_forward(in[0], p, cfg);
                    };
                    op.backward = [cfg, base](const TensorList& in, const Tensor<T>& g) {
                      SynthesisParams<T> p = base->gen;
                      assign(param_tensors(p, nullptr), in, 1);
                      SynthesisParams<T> grads = base->zeros_like().gen;
                      PanetCache<T> cache;
                      panet_forward(in[0], p, cfg, &cache);
                      TensorList out{panet_backward(cache, p, cfg, g, &grads, true)};
                      for (auto& t : copy_out(param_tensors(grads, nullptr))) out.push_back(std::move(t));
                      return out;
                    };
                    TensorList inputs{rand_uniform_seeded<T>({1, cfg.input_channels, 24, 24}, 0.0, 1.0, seed, 60)};
                    for (auto& t : copy_out(tensors)) inputs.push_back(std::move(t));
                    return std::pair{op, inputs};
                  },
                  12, 1e-8});
  return defs;
}

}  // namespace

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.fce_channels = {8, 8, 16, 16, 24, 24, 32, 32};
  cfg.decoder_channels = {32, 24, 16, 16, 8, 8, 8};
  cfg.branch_grids = {3};
  cfg.capm_channels = 4;
  cfg.spp_bins = 4;
  cfg.generator_hidden = {32, 64};
  cfg.generator_groups = {4, 4, 4};
  cfg.disc_channels = {8, 16, 32, 64};
  cfg.init_std = 0.15;
  cfg.offset_init = OffsetInit::kNormal;
  return cfg;
}

std::vector<std::string> gradcheck_ops() {
  std::vector<std::string> ops;
  for (const auto& d : case_defs()) {
    if (std::find(ops.begin(), ops.end(), d.op) == ops.end()) ops.push_back(d.op);
  }
  return ops;
}

std::vector<SuiteCase> run_gradcheck_suite(const SuiteOptions& options) {
  const auto defs = case_defs();
  if (!options.corrupt.empty() &&
      std::none_of(defs.begin(), defs.end(), [&](const CaseDef& d) { return d.op == options.corrupt; })) {
    std::string known;
    for (const auto& op : gradcheck_ops()) known += " " + op;
    throw InvalidParam("gradcheck: unknown op '" + options.corrupt + "' (known:" + known + ")");
  }
  std::vector<SuiteCase> out;
  for (const auto& d : defs) {
    const auto start = std::chrono::steady_clock::now();
    auto [op, inputs] = d.build(options.seed);
    if (d.op == options.corrupt) {
      op.backward = [inner = op.backward](const TensorList& in, const Tensor<T>& g) {
        TensorList grads = inner(in, g);
        for (auto& t : grads) {
          for (auto& v : t.data()) v *= 1.01;
        }
        return grads;
      };
    }
    GradCheckOptions gopt;
    gopt.tolerance = d.model ? options.model_tolerance : options.op_tolerance;
    gopt.max_probes_per_input = d.max_probes;
    gopt.rel_step = d.rel_step;
    gopt.seed = options.seed;
    SuiteCase c;
    c.name = d.name;
    c.op = d.op;
    c.tolerance = gopt.tolerance;
    c.report = gradcheck(op, inputs, gopt);
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.push_back(std::move(c));
  }
  return out;
}

std::string format_suite_table(const std::vector<SuiteCase>& cases) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-42s %-12s %-10s %-8s %s\n", "case", "max_rel", "tol", "time", "result");
  os << line;
  for (const auto& c : cases) {
    std::snprintf(line, sizeof line, "%-42s %-12.3e %-10.1e %-8.2f %s\n", c.name.c_str(), c.report.max_rel_error(),
                  c.tolerance, c.seconds, c.passed() ? "ok" : "FAIL");
    os << line;
  }
  return os.str();
}

}  // namespace panet
