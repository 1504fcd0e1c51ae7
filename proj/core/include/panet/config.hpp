#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "panet/model.hpp"

namespace panet {

enum class LrSchedule { kConstant, kLinear };

struct TrainConfig {
  double lr = 2e-4;
  /// kLinear holds lr for the first half of `steps`, then decays it linearly
  /// towards zero.
  LrSchedule lr_schedule = LrSchedule::kLinear;
  std::size_t batch_size = 1;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Weight of the adversarial term; 0 disables the discriminator entirely.
  double adv_weight = 0.003;
  std::size_t steps = 2000;
  std::uint64_t seed = 1;
  /// 0 writes only the final checkpoint.
  std::size_t checkpoint_every = 0;

  void validate() const;
  /// Learning rate for the 0-based step index `step`.
  double lr_at(std::size_t step) const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  void validate() const;
  /// Every key, model.* then train.*, in the format read by apply_config_text.
  std::string to_text() const;
};

/// Applies `key = value` lines. Blank lines and `#` comments are ignored;
/// lists are comma separated. Unknown keys and malformed values raise
/// InvalidParam naming the key and `origin:line`.
void apply_config_text(std::string_view text, RunConfig& cfg, std::string_view origin = "<config>");

/// Applies one dotted-key override, e.g. ("train.lr", "1e-3").
void apply_override(std::string_view key, std::string_view value, RunConfig& cfg);

/// Reads a config file on top of the defaults. Throws DataError if unreadable.
RunConfig load_config_file(const std::filesystem::path& path);

}  // namespace panet
