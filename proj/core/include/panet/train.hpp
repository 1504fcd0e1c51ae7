#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "panet/checkpoint.hpp"
#include "panet/config.hpp"
#include "panet/dataset.hpp"
#include "panet/model.hpp"

namespace panet {

/// mean((pred - gt)^2). Writes 2 (pred - gt) / count into `grad` when non-null.
template <typename T>
double euclidean_loss(const Tensor<T>& pred, const Tensor<T>& gt, Tensor<T>* grad = nullptr);

template <typename T>
struct LsganLosses {
  double loss_d = 0;  ///< 0.5 mean((d_real - 1)^2) + 0.5 mean(d_fake^2)
  double loss_g = 0;  ///< mean((d_fake - 1)^2)
  Tensor<T> grad_d_real;  ///< d loss_d / d d_real
  Tensor<T> grad_d_fake;  ///< d loss_d / d d_fake
  Tensor<T> grad_g_fake;  ///< d loss_g / d d_fake
};

template <typename T>
LsganLosses<T> lsgan_losses(const Tensor<T>& d_real, const Tensor<T>& d_fake);

// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamConfig from(const TrainConfig& cfg) { return {cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}; }
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t t = 0;
};

/// Zero moments shaped like `params`.
template <typename T>
AdamState<T> make_adam_state(const std::vector<Tensor<T>*>& params);

/// One bias-corrected Adam update. Throws OptimizerError, leaving params and
/// state untouched, if any gradient is non-finite or shapes disagree.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads, AdamState<T>& state,
               const AdamConfig& cfg);

/// Flattened (path, tensor) views of every non-empty weight/bias, in registry
/// order, e.g. "gen.fce.conv1.weight".
template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> tensor_refs(SynthesisParams<T>& p);
template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> tensor_refs(DiscriminatorParams<T>& p);

// ---------------------------------------------------------------------------

struct TrainPair {
  std::string name;
  Tensor<float> photo;   ///< 1 x C x H x W
  Tensor<float> sketch;  ///< 1 x 1 x H x W
};

/// Loads the train split, reflect-padding each pair to the model's size rules.
std::vector<TrainPair> load_train_pairs(const DatasetManifest& manifest, const ModelConfig& cfg);

/// Dataset index for batch slot `slot` of step `step`: a fresh seeded
/// permutation per epoch, so the sampler needs no stored state.
std::size_t sample_index(std::uint64_t seed, std::size_t step, std::size_t slot, std::size_t batch_size,
                         std::size_t dataset_size);

struct StepLog {
  std::size_t step = 0;  ///< 1-based index of the completed step
  double l2 = 0;
  double adv_g = 0;
  double adv_d = 0;
};

/// Alternating generator / discriminator optimisation on an in-memory set.
class Trainer {
 public:
  Trainer(RunConfig cfg, std::vector<TrainPair> data);

  /// Fresh parameters from cfg.train.seed.
  void initialize();
  /// Restores parameters, optimizer moments and the step counter. Throws
  /// CheckpointError if the checkpoint does not match the model config.
  void restore(const Checkpoint& ckpt);
  Checkpoint snapshot() const;

  /// Runs one step. Throws DivergenceError (carrying `last_checkpoint`) on a
  /// non-finite loss or gradient.
  StepLog step();

  /// Mean L2 of the current generator over every pair (forward only).
  double evaluate_l2() const;

  std::size_t steps_done() const noexcept { return step_; }
  const RunConfig& config() const noexcept { return cfg_; }
  const PANetParams<float>& params() const noexcept { return params_; }
  PANetParams<float>& mutable_params() noexcept { return params_; }
  /// Gradients of the most recent step (zeroed at the start of each step).
  const PANetParams<float>& last_grads() const noexcept { return grads_; }

  std::filesystem::path last_checkpoint;

 private:
  RunConfig cfg_;
  std::vector<TrainPair> data_;
  PANetParams<float> params_;
  PANetParams<float> grads_;
  AdamState<float> adam_g_;
  AdamState<float> adam_d_;
  std::size_t step_ = 0;
};

struct TrainOptions {
  std::filesystem::path out_dir;  ///< checkpoints and loss.csv; empty writes nothing
  std::function<void(const StepLog&)> on_step;
  const Checkpoint* resume = nullptr;
};

struct TrainResult {
  std::vector<StepLog> log;
  double final_l2 = 0;
  std::filesystem::path final_checkpoint;
};

/// Runs cfg.train.steps steps in total (counting resumed ones), appending
/// `step,l2,adv_g,adv_d` rows to out_dir/loss.csv and writing checkpoints
/// every checkpoint_every steps plus a final one.
TrainResult train_loop(const std::vector<TrainPair>& data, const RunConfig& cfg, const TrainOptions& options);

/// Model config embedded in a checkpoint; verifies it against the digest.
ModelConfig checkpoint_model_config(const Checkpoint& ckpt);
/// Generator parameters from a checkpoint. Throws CheckpointError when a
/// tensor is missing or mis-shaped.
PANetParams<float> checkpoint_params(const Checkpoint& ckpt, const ModelConfig& cfg);

}  // namespace panet
