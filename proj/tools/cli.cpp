#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "panet/checkpoint.hpp"
#include "panet/config.hpp"
#include "panet/dataset.hpp"
#include "panet/error.hpp"
#include "panet/gradcheck_suite.hpp"
#include "panet/image_io.hpp"
#include "panet/inspect.hpp"
#include "panet/metrics.hpp"
#include "panet/model.hpp"
#include "panet/train.hpp"

namespace panet::cli {

namespace fs = std::filesystem;

namespace {

// Thrown for argument combinations CLI11 cannot express.
struct UsageError : Error {
  using Error::Error;
};

struct SynthArgs {
  std::uint64_t seed = 1;
  std::size_t count = 4;
  std::size_t size = 64;
  fs::path out;
};

struct TrainArgs {
  fs::path data;
  fs::path out;
  fs::path config;
  std::vector<std::string> overrides;
  std::string ablation;
  fs::path resume;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::size_t log_every = 100;
};

struct InferArgs {
  fs::path checkpoint;
  std::vector<fs::path> inputs;
  fs::path out;
  std::uint64_t seed = 1;
};

struct EvalArgs {
  fs::path pred;
  fs::path gt;
  fs::path out;
  std::uint64_t seed = 1;
};

struct GradcheckArgs {
  double tol = 1e-4;
  std::string corrupt;
  std::uint64_t seed = 7;
  fs::path out;
};

struct InspectArgs {
  fs::path checkpoint;
  std::string ablation = "full";
  fs::path input;
  std::vector<long> pixel;
  fs::path out;
  std::uint64_t seed = 1;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw DataError("cannot write " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

std::pair<std::string, std::string> split_override(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

void apply_ablation(const std::string& name, ModelConfig& m) {
  const ModelConfig a = ModelConfig::ablation(name);
  m.fapd_variant = a.fapd_variant;
  m.branch_grids = a.branch_grids;
}

// Gray photos feed RGB models by channel replication.
Tensor<float> as_model_input(const Tensor<float>& img, const ModelConfig& cfg) {
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (c == cfg.input_channels) return img.reshape({1, c, h, w});
  if (c == 1) {
    Tensor<float> out({1, cfg.input_channels, h, w});
    for (std::size_t ch = 0; ch < cfg.input_channels; ++ch) std::copy(img.ptr(), img.ptr() + h * w, out.ptr() + ch * h * w);
    return out;
  }
  throw DataError("image has " + std::to_string(c) + " channels, model expects " + std::to_string(cfg.input_channels));
}

std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> files;
  for (const auto& p : inputs) {
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p, ec)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  if (files.empty()) throw DataError("no input images");
  return files;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.size == 0 || a.size % 8 != 0) throw UsageError("--size must be a positive multiple of 8, got " + std::to_string(a.size));
  if (a.count == 0) throw UsageError("--count must be positive");
  synth_fixture(a.seed, a.count, a.size, a.out);
  out << (a.out / "manifest.csv").string() << '\n';
  return kOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg;
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    apply_config_text(resume->config_text, cfg, a.resume.string());
  }
  if (!a.config.empty()) {
    // Layered on top of the resumed config, so load_config_file (defaults first) does not fit.
    std::ifstream f(a.config);
    if (!f) throw DataError("cannot read config " + a.config.string());
    const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    apply_config_text(text, cfg, a.config.string());
  }
  if (!a.ablation.empty()) apply_ablation(a.ablation, cfg.model);
  for (const auto& kv : a.overrides) {
    const auto [k, v] = split_override(kv);
    apply_override(k, v, cfg);
  }
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.steps) cfg.train.steps = *a.steps;
  cfg.validate();

  const DatasetManifest manifest = load_manifest(a.data);
  const auto pairs = load_train_pairs(manifest, cfg.model);
  if (pairs.empty()) throw DataError("manifest " + a.data.string() + " has no train split entries");

  const ParamCountTable counts = param_count(make_params<float>(cfg.model), cfg.model);
  out << "parameters: generator " << counts.generator_total << "  discriminator " << counts.discriminator_total << '\n';

  TrainOptions opt;
  opt.out_dir = a.out;
  opt.resume = resume ? &*resume : nullptr;
  opt.on_step = [&](const StepLog& s) {
    if (a.log_every > 0 && (s.step % a.log_every == 0 || s.step == cfg.train.steps)) {
      char line[160];
      std::snprintf(line, sizeof line, "step %6zu  l2 %.6f  adv_g %.6f  adv_d %.6f\n", s.step, s.l2, s.adv_g, s.adv_d);
      out << line << std::flush;
    }
  };
  const TrainResult r = train_loop(pairs, cfg, opt);
  char line[160];
  std::snprintf(line, sizeof line, "final mean L2 %.6f over %zu pairs\n", r.final_l2, pairs.size());
  out << line << "checkpoint " << r.final_checkpoint.string() << '\n';
  return kOk;
}

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ModelConfig cfg = checkpoint_model_config(ckpt);
  const PANetParams<float> params = checkpoint_params(ckpt, cfg);
  ensure_dir(a.out);
  for (const auto& path : expand_inputs(a.inputs)) {
    const Tensor<float> photo = as_model_input(load_image(path), cfg);
    const auto [padded, crop] = pad_to_multiple(photo, 8, cfg.branch_grids);
    const Tensor<float> sketch = crop_to(panet_forward(padded, params.gen, cfg), crop);
    const fs::path dst = a.out / (path.stem().string() + ".png");
    save_image(sketch, dst);
    out << dst.string() << '\n';
  }
  return kOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const MetricReport report = eval_set(a.pred, a.gt);
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_text(a.out / "metrics.csv", report_csv(report));
  }
  out << report_summary(report);
  return kOk;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  if (!(a.tol > 0)) throw UsageError("--tol must be positive");
  SuiteOptions opt;
  opt.op_tolerance = a.tol;
  opt.model_tolerance = 10 * a.tol;
  opt.corrupt = a.corrupt;
  opt.seed = a.seed;
  const auto cases = run_gradcheck_suite(opt);
  const std::string table = format_suite_table(cases);
  out << table;
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_text(a.out / "gradcheck.txt", table);
  }
  const auto failed = std::count_if(cases.begin(), cases.end(), [](const SuiteCase& c) { return !c.passed(); });
  out << (failed == 0 ? "all cases passed\n" : std::to_string(failed) + " case(s) failed\n");
  return failed == 0 ? kOk : kCheckFailed;
}

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  ModelConfig cfg;
  PANetParams<float> params;
  if (!a.checkpoint.empty()) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    cfg = checkpoint_model_config(ckpt);
    params = checkpoint_params(ckpt, cfg);
  } else {
    cfg = ModelConfig::ablation(a.ablation);
    params = init_params<float>(cfg, a.seed);
  }
  const Tensor<float> photo = as_model_input(load_image(a.input), cfg);
  const std::size_t h = photo.dim(2), w = photo.dim(3);
  if (a.pixel[0] < 0 || a.pixel[1] < 0 || static_cast<std::size_t>(a.pixel[0]) >= h ||
      static_cast<std::size_t>(a.pixel[1]) >= w) {
    throw UsageError("--pixel " + std::to_string(a.pixel[0]) + "," + std::to_string(a.pixel[1]) + " outside the " +
                     std::to_string(h) + "x" + std::to_string(w) + " image");
  }
  const auto y = static_cast<std::size_t>(a.pixel[0]), x = static_cast<std::size_t>(a.pixel[1]);
  const auto [padded, crop] = pad_to_multiple(photo, 8, cfg.branch_grids);
  const InspectResult r = inspect(padded, params.gen, cfg, y, x);

  ensure_dir(a.out);
  std::string csv = "tap,y,x\n";
  for (std::size_t i = 0; i < r.locations.size(); ++i) {
    char line[96];
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f\n", i, r.locations[i].y, r.locations[i].x);
    csv += line;
  }
  write_text(a.out / "locations.csv", csv);
  save_image(crop_to(r.overlay.reshape({1, 3, padded.dim(2), padded.dim(3)}), crop), a.out / "offsets.png");
  save_image(r.fapd_heatmap, a.out / "fapd_mean.png");
  for (std::size_t b = 0; b < r.capm_heatmaps.size(); ++b) {
    save_image(r.capm_heatmaps[b], a.out / ("capm_branch" + std::to_string(b + 1) + "_mean.png"));
  }
  out << r.locations.size() << " sampling locations for pixel (" << y << ", " << x << ")\n";
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face sketch synthesis: data fixtures, training, inference, evaluation and diagnostics."};
  app.name("panet");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "Write procedural photo/sketch pairs and a manifest.");
  s->add_option("--seed", synth.seed, "Fixture seed")->capture_default_str();
  s->add_option("--count", synth.count, "Number of pairs")->capture_default_str();
  s->add_option("--size", synth.size, "Image side, a multiple of 8")->capture_default_str();
  s->add_option("--out", synth.out, "Output directory")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train on the train split of a manifest.");
  t->add_option("--data", train.data, "Manifest CSV (photo,sketch,split)")->required();
  t->add_option("--out", train.out, "Directory for checkpoints and loss.csv")->required();
  t->add_option("--config", train.config, "Config file of key = value lines");
  t->add_option("--set", train.overrides, "Override, e.g. --set train.lr=1e-3 (repeatable)");
  t->add_option("--ablation", train.ablation, "Topology: full | fapd-sc | no-capm")
      ->check(CLI::IsMember({"full", "fapd-sc", "no-capm"}));
  t->add_option("--resume", train.resume, "Continue from a checkpoint");
  t->add_option("--seed", train.seed, "Training seed (train.seed)");
  t->add_option("--steps", train.steps, "Total steps including resumed ones (train.steps)");
  t->add_option("--log-every", train.log_every, "Print every N steps; 0 silences")->capture_default_str();

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Synthesize sketches for photos.");
  i->add_option("--checkpoint", infer.checkpoint, "Trained checkpoint")->required();
  i->add_option("--input", infer.inputs, "Photo file or directory (repeatable)")->required();
  i->add_option("--out", infer.out, "Output directory")->required();
  i->add_option("--seed", infer.seed, "Accepted for uniformity; inference is deterministic");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score predicted sketches against ground truth.");
  e->add_option("--pred", eval.pred, "Directory of predicted sketches")->required();
  e->add_option("--gt", eval.gt, "Directory of ground-truth sketches with the same file names")->required();
  e->add_option("--out", eval.out, "Directory for metrics.csv");
  e->add_option("--seed", eval.seed, "Accepted for uniformity; metrics are deterministic");

  GradcheckArgs grad;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of every op and a tiny end-to-end model.");
  g->add_option("--tol", grad.tol, "Relative tolerance for ops; the model uses 10x")->capture_default_str();
  g->add_option("--corrupt", grad.corrupt, "Scale one op family's analytic gradient by 1.01");
  g->add_option("--seed", grad.seed, "Seed for inputs and probes")->capture_default_str();
  g->add_option("--out", grad.out, "Directory for gradcheck.txt");

  InspectArgs insp;
  auto* n = app.add_subcommand("inspect", "Decoder sampling locations and feature heatmaps for one pixel.");
  n->add_option("--checkpoint", insp.checkpoint, "Trained checkpoint (default: freshly initialised model)");
  n->add_option("--ablation", insp.ablation, "Topology when no checkpoint is given")
      ->check(CLI::IsMember({"full", "fapd-sc", "no-capm"}))
      ->capture_default_str();
  n->add_option("--input", insp.input, "Photo")->required();
  n->add_option("--pixel", insp.pixel, "Pixel as ROW,COL")->required()->delimiter(',')->expected(2);
  n->add_option("--out", insp.out, "Output directory")->required();
  n->add_option("--seed", insp.seed, "Initialisation seed when no checkpoint is given")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int rc = app.exit(ex, out, err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*t) return cmd_train(train, out);
    if (*i) return cmd_infer(infer, out);
    if (*e) return cmd_eval(eval, out);
    if (*g) return cmd_gradcheck(grad, out);
    if (*n) return cmd_inspect(insp, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const InvalidParam& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const DivergenceError& ex) {
    err << "error: training diverged: " << ex.what() << '\n';
    if (!ex.last_checkpoint().empty()) err << "last checkpoint: " << ex.last_checkpoint() << '\n';
    return kDiverged;
  } catch (const CheckpointError& ex) {
    err << "error: " << ex.what() << '\n';
    return kCheckpointError;
  } catch (const DataError& ex) {
    err << "error: " << ex.what() << '\n';
    return kIoError;
  } catch (const ShapeMismatch& ex) {
    err << "error: " << ex.what() << '\n';
    return kIoError;
  }
  return kUsage;
}

}  // namespace panet::cli
