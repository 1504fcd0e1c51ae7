#include "panet/train.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "panet/image_io.hpp"
#include "panet/random.hpp"

namespace panet {

template <typename T>
double euclidean_loss(const Tensor<T>& pred, const Tensor<T>& gt, Tensor<T>* grad) {
  if (!pred.same_shape(gt)) {
    throw ShapeMismatch("euclidean_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                        shape_str(gt.shape()));
  }
  const std::size_t n = pred.numel();
  if (grad != nullptr) *grad = Tensor<T>(pred.shape());
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    sum += d * d;
    if (grad != nullptr) (*grad)[i] = static_cast<T>(2.0 * d / static_cast<double>(n));
  }
  return sum / static_cast<double>(n);
}

template <typename T>
LsganLosses<T> lsgan_losses(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  LsganLosses<T> out;
  out.grad_d_real = Tensor<T>(d_real.shape());
  out.grad_d_fake = Tensor<T>(d_fake.shape());
  out.grad_g_fake = Tensor<T>(d_fake.shape());
  double real = 0, fake = 0, gen = 0;
  const double nr = static_cast<double>(d_real.numel()), nf = static_cast<double>(d_fake.numel());
  for (std::size_t i = 0; i < d_real.numel(); ++i) {
    const double r = d_real[i] - 1.0;
    real += r * r;
    out.grad_d_real[i] = static_cast<T>(r / nr);
  }
  for (std::size_t i = 0; i < d_fake.numel(); ++i) {
    const double f = d_fake[i];
    fake += f * f;
    gen += (f - 1.0) * (f - 1.0);
    out.grad_d_fake[i] = static_cast<T>(f / nf);
    out.grad_g_fake[i] = static_cast<T>(2.0 * (f - 1.0) / nf);
  }
  out.loss_d = 0.5 * real / nr + 0.5 * fake / nf;
  out.loss_g = gen / nf;
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
AdamState<T> make_adam_state(const std::vector<Tensor<T>*>& params) {
  AdamState<T> s;
  for (const Tensor<T>* p : params) {
    s.m.emplace_back(p->shape());
    s.v.emplace_back(p->shape());
  }
  return s;
}

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads, AdamState<T>& state,
               const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw OptimizerError("adam_step: parameter, gradient and moment lists differ in length");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!grads[k]->same_shape(*params[k]) || !state.m[k].same_shape(*params[k]) ||
        !state.v[k].same_shape(*params[k])) {
      throw OptimizerError("adam_step: shape mismatch for parameter " + std::to_string(k));
    }
    if (!all_finite(*grads[k])) {
      throw OptimizerError("adam_step: non-finite gradient in parameter " + std::to_string(k) + "; step aborted");
    }
  }
  const std::uint64_t t = state.t + 1;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T one_b1 = static_cast<T>(1.0 - cfg.beta1), one_b2 = static_cast<T>(1.0 - cfg.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    T* p = params[k]->ptr();
    const T* g = grads[k]->ptr();
    T* m = state.m[k].ptr();
    T* v = state.v[k].ptr();
    for (std::size_t i = 0, n = params[k]->numel(); i < n; ++i) {
      m[i] = b1 * m[i] + one_b1 * g[i];
      v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
  state.t = t;
}

namespace {

template <typename T, typename Params>
std::vector<std::pair<std::string, Tensor<T>*>> collect_refs(Params& p) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  p.for_each([&](const std::string& path, LayerParams<T>& layer) {
    if (!layer.weight.empty()) out.emplace_back(path + ".weight", &layer.weight);
    if (!layer.bias.empty()) out.emplace_back(path + ".bias", &layer.bias);
  });
  return out;
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> tensor_refs(SynthesisParams<T>& p) {
  return collect_refs<T>(p);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> tensor_refs(DiscriminatorParams<T>& p) {
  return collect_refs<T>(p);
}

// ---------------------------------------------------------------------------

std::vector<TrainPair> load_train_pairs(const DatasetManifest& manifest, const ModelConfig& cfg) {
  std::vector<TrainPair> out;
  for (const auto& e : manifest.select(Split::kTrain)) {
    Tensor<float> photo = load_image(manifest.resolve(e.photo));
    Tensor<float> sketch = load_image(manifest.resolve(e.sketch));
    if (photo.dim(0) != cfg.input_channels) {
      throw DataError(e.photo.string() + ": expected " + std::to_string(cfg.input_channels) + " channels, got " +
                      std::to_string(photo.dim(0)));
    }
    if (sketch.dim(0) == 3) {
      Tensor<float> gray({1, sketch.dim(1), sketch.dim(2)});
      const std::size_t plane = gray.numel();
      for (std::size_t i = 0; i < plane; ++i) gray[i] = (sketch[i] + sketch[plane + i] + sketch[2 * plane + i]) / 3.0f;
      sketch = std::move(gray);
    }
    if (photo.dim(1) != sketch.dim(1) || photo.dim(2) != sketch.dim(2)) {
      throw DataError(e.photo.string() + " and " + e.sketch.string() + " differ in size");
    }
    auto [pp, crop] = pad_to_multiple(photo, 8, cfg.branch_grids);
    auto [sp, crop2] = pad_to_multiple(sketch, 8, cfg.branch_grids);
    (void)crop;
    (void)crop2;
    out.push_back({e.photo.string(), pp.reshape({1, pp.dim(0), pp.dim(1), pp.dim(2)}),
                   sp.reshape({1, sp.dim(0), sp.dim(1), sp.dim(2)})});
  }
  if (out.empty()) throw DataError("manifest has no training pairs");
  return out;
}

std::size_t sample_index(std::uint64_t seed, std::size_t step, std::size_t slot, std::size_t batch_size,
                         std::size_t dataset_size) {
  const std::size_t k = step * batch_size + slot;
  const std::size_t epoch = k / dataset_size, pos = k % dataset_size;
  std::vector<std::size_t> perm(dataset_size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const CounterRng rng(seed, 0xe90c0000ULL + epoch);
  for (std::size_t i = dataset_size; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i, i)]);
  return perm[pos];
}

// ---------------------------------------------------------------------------

Trainer::Trainer(RunConfig cfg, std::vector<TrainPair> data) : cfg_(std::move(cfg)), data_(std::move(data)) {
  cfg_.validate();
  if (data_.empty()) throw DataError("trainer needs at least one training pair");
  for (const auto& p : data_) {
    if (!p.photo.same_shape(data_.front().photo) && cfg_.train.batch_size > 1) {
      throw DataError("batch_size > 1 requires equally sized images");
    }
  }
}

void Trainer::initialize() {
  params_ = init_params<float>(cfg_.model, cfg_.train.seed);
  grads_ = params_.zeros_like();
  std::vector<Tensor<float>*> g, d;
  for (auto& [_, t] : tensor_refs(params_.gen)) g.push_back(t);
  for (auto& [_, t] : tensor_refs(params_.disc)) d.push_back(t);
  adam_g_ = make_adam_state(g);
  adam_d_ = make_adam_state(d);
  step_ = 0;
}

namespace {

constexpr const char* kAdamM = "adam.m.";
constexpr const char* kAdamV = "adam.v.";

void copy_tensor(const Checkpoint& ckpt, const std::string& path, Tensor<float>& dst) {
  const Tensor<float>* src = ckpt.find(path);
  if (src == nullptr) throw CheckpointError("checkpoint is missing tensor '" + path + "'");
  if (!src->same_shape(dst)) {
    throw CheckpointError("checkpoint tensor '" + path + "' has shape " + shape_str(src->shape()) + ", expected " +
                          shape_str(dst.shape()));
  }
  dst = *src;
}

}  // namespace

ModelConfig checkpoint_model_config(const Checkpoint& ckpt) {
  RunConfig rc;
  try {
    apply_config_text(ckpt.config_text, rc, "<checkpoint>");
  } catch (const InvalidParam& e) {
    throw CheckpointError(std::string("checkpoint config is unreadable: ") + e.what());
  }
  if (rc.model.digest() != ckpt.config_digest) {
    throw CheckpointError("checkpoint config digest does not match its embedded config");
  }
  return rc.model;
}

PANetParams<float> checkpoint_params(const Checkpoint& ckpt, const ModelConfig& cfg) {
  if (cfg.digest() != ckpt.config_digest) {
    throw CheckpointError("checkpoint was written for a different model config (digest mismatch)");
  }
  PANetParams<float> p = make_params<float>(cfg);
  for (auto& [path, t] : tensor_refs(p.gen)) copy_tensor(ckpt, path, *t);
  for (auto& [path, t] : tensor_refs(p.disc)) copy_tensor(ckpt, path, *t);
  return p;
}

void Trainer::restore(const Checkpoint& ckpt) {
  params_ = checkpoint_params(ckpt, cfg_.model);
  grads_ = params_.zeros_like();
  const std::uint64_t seed = ckpt.meta_or("seed", cfg_.train.seed);
  if (seed != cfg_.train.seed) {
    throw CheckpointError("checkpoint was trained with seed " + std::to_string(seed) + ", config has " +
                          std::to_string(cfg_.train.seed));
  }
  std::vector<Tensor<float>*> g, d;
  for (auto& [_, t] : tensor_refs(params_.gen)) g.push_back(t);
  for (auto& [_, t] : tensor_refs(params_.disc)) d.push_back(t);
  adam_g_ = make_adam_state(g);
  adam_d_ = make_adam_state(d);
  auto load_moments = [&](auto refs, AdamState<float>& st) {
    for (std::size_t k = 0; k < refs.size(); ++k) {
      copy_tensor(ckpt, kAdamM + refs[k].first, st.m[k]);
      copy_tensor(ckpt, kAdamV + refs[k].first, st.v[k]);
    }
  };
  load_moments(tensor_refs(params_.gen), adam_g_);
  load_moments(tensor_refs(params_.disc), adam_d_);
  adam_g_.t = ckpt.meta_or("adam_gen_t", 0);
  adam_d_.t = ckpt.meta_or("adam_disc_t", 0);
  step_ = ckpt.meta_or("step", 0);
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ckpt;
  ckpt.config_text = cfg_.to_text();
  ckpt.config_digest = cfg_.model.digest();
  ckpt.meta["step"] = step_;
  ckpt.meta["seed"] = cfg_.train.seed;
  ckpt.meta["adam_gen_t"] = adam_g_.t;
  ckpt.meta["adam_disc_t"] = adam_d_.t;
  auto& params = const_cast<PANetParams<float>&>(params_);
  auto add = [&](auto refs, const AdamState<float>& st) {
    for (std::size_t k = 0; k < refs.size(); ++k) ckpt.tensors.emplace_back(refs[k].first, *refs[k].second);
    for (std::size_t k = 0; k < refs.size(); ++k) ckpt.tensors.emplace_back(kAdamM + refs[k].first, st.m[k]);
    for (std::size_t k = 0; k < refs.size(); ++k) ckpt.tensors.emplace_back(kAdamV + refs[k].first, st.v[k]);
  };
  add(tensor_refs(params.gen), adam_g_);
  add(tensor_refs(params.disc), adam_d_);
  return ckpt;
}

StepLog Trainer::step() {
  if (params_.gen.fce.empty()) throw InvalidParam("Trainer::step called before initialize/restore");
  const std::size_t batch = cfg_.train.batch_size;
  std::vector<Tensor<float>> photos, sketches;
  for (std::size_t s = 0; s < batch; ++s) {
    const std::size_t idx = sample_index(cfg_.train.seed, step_, s, batch, data_.size());
    photos.push_back(data_[idx].photo);
    sketches.push_back(data_[idx].sketch);
  }
  const Tensor<float> photo = batch == 1 ? photos.front() : concat_batch(photos);
  const Tensor<float> sketch = batch == 1 ? sketches.front() : concat_batch(sketches);
  const double lambda = cfg_.train.adv_weight;
  AdamConfig adam = AdamConfig::from(cfg_.train);
  adam.lr = cfg_.train.lr_at(step_);

  StepLog log;
  log.step = step_ + 1;
  auto diverged = [&](const std::string& why) {
    return DivergenceError("training diverged at step " + std::to_string(log.step) + ": " + why, last_checkpoint);
  };

  try {
    grads_.for_each([](const std::string&, LayerParams<float>& p) {
      p.weight.fill(0.0f);
      p.bias.fill(0.0f);
    });

    PanetCache<float> cache;
    const Tensor<float> pred = panet_forward(photo, params_.gen, cfg_.model, &cache);
    Tensor<float> g_pred;
    log.l2 = euclidean_loss(pred, sketch, &g_pred);
    if (!std::isfinite(log.l2)) throw diverged("L2 loss is not finite");

    if (lambda > 0) {
      DiscCache<float> dc;
      const Tensor<float> d_fake = discriminator_forward(pred, params_.disc, cfg_.model, &dc);
      const LsganLosses<float> adv = lsgan_losses(Tensor<float>(d_fake.shape()), d_fake);
      log.adv_g = adv.loss_g;
      const Tensor<float> g_fake = discriminator_backward(dc, params_.disc, cfg_.model,
                                                          scaled(adv.grad_g_fake, static_cast<float>(lambda)),
                                                          static_cast<DiscriminatorParams<float>*>(nullptr));
      add_inplace(g_pred, g_fake);
    }
    panet_backward(cache, params_.gen, cfg_.model, g_pred, &grads_.gen);

    {
      std::vector<Tensor<float>*> p;
      std::vector<const Tensor<float>*> g;
      for (auto& [_, t] : tensor_refs(params_.gen)) p.push_back(t);
      for (auto& [_, t] : tensor_refs(grads_.gen)) g.push_back(t);
      adam_step(p, g, adam_g_, adam);
    }

    if (lambda > 0) {
      DiscCache<float> dc_real, dc_fake;
      const Tensor<float> d_real = discriminator_forward(sketch, params_.disc, cfg_.model, &dc_real);
      const Tensor<float> d_fake = discriminator_forward(pred, params_.disc, cfg_.model, &dc_fake);
      const LsganLosses<float> adv = lsgan_losses(d_real, d_fake);
      log.adv_d = adv.loss_d;
      if (!std::isfinite(log.adv_d)) throw diverged("discriminator loss is not finite");
      discriminator_backward(dc_real, params_.disc, cfg_.model, adv.grad_d_real, &grads_.disc, false);
      discriminator_backward(dc_fake, params_.disc, cfg_.model, adv.grad_d_fake, &grads_.disc, false);
      std::vector<Tensor<float>*> p;
      std::vector<const Tensor<float>*> g;
      for (auto& [_, t] : tensor_refs(params_.disc)) p.push_back(t);
      for (auto& [_, t] : tensor_refs(grads_.disc)) g.push_back(t);
      adam_step(p, g, adam_d_, adam);
    }
  } catch (const NonFiniteError& e) {
    throw diverged(e.what());
  } catch (const OptimizerError& e) {
    throw diverged(e.what());
  }
  ++step_;
  return log;
}

double Trainer::evaluate_l2() const {
  double sum = 0;
  for (const auto& p : data_) sum += euclidean_loss(panet_forward(p.photo, params_.gen, cfg_.model), p.sketch);
  return sum / static_cast<double>(data_.size());
}

// ---------------------------------------------------------------------------

namespace {

std::string checkpoint_name(std::size_t step) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "step_%06zu.ckpt", step);
  return buf;
}

}  // namespace

TrainResult train_loop(const std::vector<TrainPair>& data, const RunConfig& cfg, const TrainOptions& options) {
  Trainer trainer(cfg, data);
  if (options.resume != nullptr) {
    trainer.restore(*options.resume);
  } else {
    trainer.initialize();
  }

  std::FILE* csv = nullptr;
  if (!options.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec) throw DataError("cannot create " + options.out_dir.string() + ": " + ec.message());
    const auto csv_path = options.out_dir / "loss.csv";
    const bool append = options.resume != nullptr && std::filesystem::exists(csv_path);
    csv = std::fopen(csv_path.string().c_str(), append ? "a" : "w");
    if (csv == nullptr) throw DataError("cannot write " + csv_path.string());
    if (!append) std::fputs("step,l2,adv_g,adv_d\n", csv);
  }
  struct Closer {
    std::FILE* f;
    ~Closer() {
      if (f != nullptr) std::fclose(f);
    }
  } closer{csv};

  auto save = [&](const std::filesystem::path& path) {
    save_checkpoint(path, trainer.snapshot());
    trainer.last_checkpoint = path;
  };

  TrainResult result;
  while (trainer.steps_done() < cfg.train.steps) {
    const StepLog log = trainer.step();
    result.log.push_back(log);
    if (csv != nullptr) {
      std::fprintf(csv, "%zu,%.9g,%.9g,%.9g\n", log.step, log.l2, log.adv_g, log.adv_d);
      std::fflush(csv);
    }
    if (options.on_step) options.on_step(log);
    if (!options.out_dir.empty() && cfg.train.checkpoint_every > 0 && log.step % cfg.train.checkpoint_every == 0) {
      save(options.out_dir / checkpoint_name(log.step));
    }
  }
  if (!options.out_dir.empty()) {
    save(options.out_dir / "final.ckpt");
    result.final_checkpoint = trainer.last_checkpoint;
  }
  result.final_l2 = trainer.evaluate_l2();
  return result;
}

#define PANET_INSTANTIATE(T)                                                                                    \
  template double euclidean_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                            \
  template LsganLosses<T> lsgan_losses<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template AdamState<T> make_adam_state<T>(const std::vector<Tensor<T>*>&);                                     \
  template void adam_step<T>(const std::vector<Tensor<T>*>&, const std::vector<const Tensor<T>*>&, AdamState<T>&, \
                             const AdamConfig&);                                                                \
  template std::vector<std::pair<std::string, Tensor<T>*>> tensor_refs<T>(SynthesisParams<T>&);                 \
  template std::vector<std::pair<std::string, Tensor<T>*>> tensor_refs<T>(DiscriminatorParams<T>&);

PANET_INSTANTIATE(float)
PANET_INSTANTIATE(double)

#undef PANET_INSTANTIATE

}  // namespace panet
