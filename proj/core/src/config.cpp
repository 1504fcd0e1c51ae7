#include "panet/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace panet {

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidParam("train.lr must be > 0");
  if (batch_size == 0) throw InvalidParam("train.batch_size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw InvalidParam("train.adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw InvalidParam("train.adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw InvalidParam("train.adam_eps must be > 0");
  if (!(adv_weight >= 0.0) || !std::isfinite(adv_weight)) throw InvalidParam("train.adv_weight must be >= 0");
  if (steps == 0) throw InvalidParam("train.steps must be >= 1");
}

double TrainConfig::lr_at(std::size_t step) const {
  if (lr_schedule == LrSchedule::kConstant) return lr;
  const std::size_t hold = steps / 2;
  if (step < hold) return lr;
  return lr * (1.0 - double(step - hold) / double(steps - hold + 1));
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw InvalidParam("config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "' as " +
                     std::string(expected));
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an unsigned integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  v = trim(v);
  if (v.empty() || v == "none") return out;
  while (true) {
    const auto comma = v.find(',');
    out.push_back(parse_size(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v = v.substr(comma + 1);
  }
  return out;
}

std::string fmt_double(double d) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, p);
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto size_key = [&](const char* name, std::size_t ModelConfig::*m) {
      t[name] = [m](RunConfig& c, std::string_view k, std::string_view v) { c.model.*m = parse_size(k, v); };
    };
    auto list_key = [&](const char* name, std::vector<std::size_t> ModelConfig::*m) {
      t[name] = [m](RunConfig& c, std::string_view k, std::string_view v) { c.model.*m = parse_list(k, v); };
    };
    size_key("model.input_channels", &ModelConfig::input_channels);
    size_key("model.sketch_channels", &ModelConfig::sketch_channels);
    size_key("model.capm_channels", &ModelConfig::capm_channels);
    size_key("model.spp_bins", &ModelConfig::spp_bins);
    list_key("model.fce_channels", &ModelConfig::fce_channels);
    list_key("model.decoder_channels", &ModelConfig::decoder_channels);
    list_key("model.branch_grids", &ModelConfig::branch_grids);
    list_key("model.generator_hidden", &ModelConfig::generator_hidden);
    list_key("model.generator_groups", &ModelConfig::generator_groups);
    list_key("model.disc_channels", &ModelConfig::disc_channels);
    t["model.fapd_variant"] = [](RunConfig& c, std::string_view, std::string_view v) {
      c.model.fapd_variant = parse_fapd_variant(v);
    };
    t["model.pooling"] = [](RunConfig& c, std::string_view, std::string_view v) { c.model.pooling = parse_pool_mode(v); };
    t["model.spp_mode"] = [](RunConfig& c, std::string_view, std::string_view v) { c.model.spp_mode = parse_pool_mode(v); };
    t["model.init_std"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.model.init_std = parse_double(k, v);
    };
    t["model.offset_init"] = [](RunConfig& c, std::string_view, std::string_view v) {
      c.model.offset_init = parse_offset_init(v);
    };

    auto dbl_key = [&](const char* name, double TrainConfig::*m) {
      t[name] = [m](RunConfig& c, std::string_view k, std::string_view v) { c.train.*m = parse_double(k, v); };
    };
    dbl_key("train.lr", &TrainConfig::lr);
    dbl_key("train.adam_beta1", &TrainConfig::adam_beta1);
    dbl_key("train.adam_beta2", &TrainConfig::adam_beta2);
    dbl_key("train.adam_eps", &TrainConfig::adam_eps);
    dbl_key("train.adv_weight", &TrainConfig::adv_weight);
    t["train.lr_schedule"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      if (v == "constant") {
        c.train.lr_schedule = LrSchedule::kConstant;
      } else if (v == "linear") {
        c.train.lr_schedule = LrSchedule::kLinear;
      } else {
        throw InvalidParam(std::string(k) + ": expected constant or linear, got '" + std::string(v) + "'");
      }
    };
    t["train.batch_size"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.train.batch_size = parse_size(k, v);
    };
    t["train.steps"] = [](RunConfig& c, std::string_view k, std::string_view v) { c.train.steps = parse_size(k, v); };
    t["train.seed"] = [](RunConfig& c, std::string_view k, std::string_view v) { c.train.seed = parse_u64(k, v); };
    t["train.checkpoint_every"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.train.checkpoint_every = parse_size(k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

void apply_override(std::string_view key, std::string_view value, RunConfig& cfg) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw InvalidParam("unknown config key '" + std::string(key) + "'");
  it->second(cfg, key, trim(value));
}

void apply_config_text(std::string_view text, RunConfig& cfg, std::string_view origin) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidParam(std::string(origin) + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      apply_override(trim(line.substr(0, eq)), line.substr(eq + 1), cfg);
    } catch (const InvalidParam& e) {
      throw InvalidParam(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_config_text(ss.str(), cfg, path.string());
  return cfg;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << model.canonical_text();
  os << "model.init_std = " << fmt_double(model.init_std) << '\n'
     << "model.offset_init = " << to_string(model.offset_init) << '\n'
     << "train.lr = " << fmt_double(train.lr) << '\n'
     << "train.lr_schedule = " << (train.lr_schedule == LrSchedule::kLinear ? "linear" : "constant") << '\n'
     << "train.batch_size = " << train.batch_size << '\n'
     << "train.adam_beta1 = " << fmt_double(train.adam_beta1) << '\n'
     << "train.adam_beta2 = " << fmt_double(train.adam_beta2) << '\n'
     << "train.adam_eps = " << fmt_double(train.adam_eps) << '\n'
     << "train.adv_weight = " << fmt_double(train.adv_weight) << '\n'
     << "train.steps = " << train.steps << '\n'
     << "train.seed = " << train.seed << '\n'
     << "train.checkpoint_every = " << train.checkpoint_every << '\n';
  return os.str();
}

}  // namespace panet
