// Acceptance checks. `panet_acceptance` runs all eight; pass criterion numbers
// to run a subset. One line per criterion: "criterion N: PASS|FAIL  detail".

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "panet/adaptive_ops.hpp"
#include "panet/dataset.hpp"
#include "panet/gradcheck_suite.hpp"
#include "panet/metrics.hpp"
#include "panet/random.hpp"
#include "panet/train.hpp"
#include "support.hpp"

using namespace panet;
using panet::test::TempDir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool params_identical(const PANetParams<float>& a, const PANetParams<float>& b) {
  std::vector<const Tensor<float>*> ta, tb;
  a.for_each([&](const std::string&, const LayerParams<float>& l) {
    ta.push_back(&l.weight);
    ta.push_back(&l.bias);
  });
  b.for_each([&](const std::string&, const LayerParams<float>& l) {
    tb.push_back(&l.weight);
    tb.push_back(&l.bias);
  });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (!(*ta[i] == *tb[i])) return false;
  return true;
}

std::vector<TrainPair> fixture_pairs(const TempDir& dir, std::uint64_t seed, std::size_t count, std::size_t size,
                                     const ModelConfig& cfg) {
  synth_fixture(seed, count, size, dir.path());
  return load_train_pairs(load_manifest(dir / "manifest.csv"), cfg);
}

// ---------------------------------------------------------------------------

Outcome zero_offset_equivalence() {
  double worst = 0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const CounterRng rng(1000 + i);
    const std::size_t n = 1 + rng.below(0, 2), c = 1 + rng.below(1, 5), o = 1 + rng.below(2, 5);
    const std::size_t h = 3 + rng.below(3, 10), w = 3 + rng.below(4, 10);
    const auto spec = ConvSpec::same3x3(c, o);
    const auto f = randn_seeded<double>({n, c, h, w}, 1.0, 1000 + i, 1);
    const LayerParams<double> p{randn_seeded<double>({o, c, 3, 3}, 1.0, 1000 + i, 2),
                                randn_seeded<double>({o}, 1.0, 1000 + i, 3)};
    const OffsetField<double> zero{Tensor<double>({n, 18, h, w})};
    worst = std::max(worst, max_abs_diff(deform_conv2d(f, p, zero, spec), conv2d(f, p, spec)));
  }
  return {worst < 1e-12, "50 instances, max |deform - conv| = " + fmt("%.3g", worst)};
}

Outcome gradient_suite() {
  const auto cases = run_gradcheck_suite();
  std::printf("%s", format_suite_table(cases).c_str());
  bool ok = true;
  double op_max = 0, model_max = 0;
  for (const auto& c : cases) {
    ok = ok && c.passed();
    (c.op == "panet" ? model_max : op_max) = std::max(c.op == "panet" ? model_max : op_max, c.report.max_rel_error());
  }
  const std::vector<std::string> required{"conv2d",     "conv_transpose2d", "maxpool2",       "bilinear_sample",
                                          "deform_conv", "spp_pool",         "grouped_fc",     "weight_generator",
                                          "adaptive_conv", "discriminator",  "panet"};
  for (const auto& op : required) {
    ok = ok && std::any_of(cases.begin(), cases.end(), [&](const SuiteCase& c) { return c.op == op; });
  }
  // The harness must notice a 1% error in the deformable backward.
  SuiteOptions corrupt;
  corrupt.corrupt = "deform_conv";
  const auto bad = run_gradcheck_suite(corrupt);
  const bool caught = std::any_of(bad.begin(), bad.end(), [](const SuiteCase& c) { return !c.passed(); });
  return {ok && caught, std::to_string(cases.size()) + " cases, ops max rel " + fmt("%.2g", op_max) +
                            " (tol 1e-4), tiny PANet " + fmt("%.2g", model_max) + " (tol 1e-3), corrupted deform_conv " +
                            (caught ? "detected" : "NOT detected")};
}

Outcome paper_shapes() {
  const ModelConfig cfg;
  const auto params = init_params<float>(cfg, 1);
  const auto img = rand_uniform_seeded<float>({1, 3, 120, 120}, 0, 1, 2);
  PanetCache<float> cache;
  const auto sketch = panet_forward(img, params.gen, cfg, &cache);
  std::vector<std::string> bad;
  auto expect = [&](const char* what, const Shape& got, const Shape& want) {
    if (got != want) bad.push_back(std::string(what) + " " + shape_str(got));
  };
  expect("f_eighth", cache.pyramid.f_eighth.shape(), {1, 256, 15, 15});
  expect("fapd", cache.fapd_out.shape(), {1, 64, 120, 120});
  expect("capm", cache.head_in.shape(), {1, 96, 120, 120});
  expect("sketch", sketch.shape(), {1, 1, 120, 120});
  const auto spec = cfg.generator_spec();
  const auto regions = region_partition(cache.fapd_out, 4);
  const auto filt = weight_generator(regions[5], params.gen.capm[1], spec);
  if (filt.weights.numel() != 18432 || filt.weights.shape() != Shape{64, 3, 3, 32}) {
    bad.push_back("generator " + shape_str(filt.weights.shape()));
  }
  param_count(params, cfg);  // throws if a generator head is mis-sized
  std::string detail = "f_eighth 1x256x15x15, FAPD 1x64x120x120, CAPM 1x96x120x120, sketch 1x1x120x120, filter 18432";
  for (const auto& b : bad) detail += "; MISMATCH " + b;
  return {bad.empty(), detail};
}

Outcome offset_bookkeeping() {
  TempDir dir("accept4");
  synth_fixture(4, 1, 64, dir.path());
  const std::size_t py = 30, px = 33;
  const std::string out = (dir / "inspect").string();
  const std::string input = (dir / "photo_000.png").string();
  const std::string pixel = std::to_string(py) + "," + std::to_string(px);
  const char* argv[] = {"panet", "inspect", "--seed", "5", "--input", input.c_str(), "--pixel", pixel.c_str(),
                        "--out", out.c_str()};
  std::ostringstream so, se;
  const int rc = panet::cli::run_cli(10, argv, so, se);
  if (rc != 0) return {false, "inspect exited " + std::to_string(rc) + ": " + se.str()};

  std::ifstream csv(dir / "inspect" / "locations.csv");
  std::string line;
  std::getline(csv, line);
  std::vector<std::pair<double, double>> pts;
  while (std::getline(csv, line)) {
    double y = 0, x = 0;
    std::size_t idx = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf", &idx, &y, &x) == 3) pts.emplace_back(y, x);
  }
  std::size_t mismatches = 0;
  for (int k3 = 0; k3 < 9; ++k3)
    for (int k2 = 0; k2 < 9; ++k2)
      for (int k1 = 0; k1 < 9; ++k1) {
        const std::size_t i = std::size_t((k3 * 9 + k2) * 9 + k1);
        const double ey = double(py) + (k3 / 3 - 1) + 4 * (k2 / 3 - 1) + 8 * (k1 / 3 - 1);
        const double ex = double(px) + (k3 % 3 - 1) + 4 * (k2 % 3 - 1) + 8 * (k1 % 3 - 1);
        if (i >= pts.size() || pts[i].first != ey || pts[i].second != ex) ++mismatches;
      }
  const bool ok = pts.size() == 729 && mismatches == 0 && so.str().find("729") != std::string::npos;
  return {ok, std::to_string(pts.size()) + " locations for pixel (" + pixel + "), " + std::to_string(mismatches) +
                  " differ from the composed p + a + 4b + 8c stencil"};
}

Outcome overfit_capacity() {
  TempDir dir("accept5");
  RunConfig cfg;
  cfg.train.adv_weight = 0;
  cfg.train.steps = 2000;
  cfg.train.seed = 1;
  const auto pairs = fixture_pairs(dir, 1, 4, 64, cfg.model);

  auto run = [&](std::vector<double>& losses) {
    Trainer t(cfg, pairs);
    t.initialize();
    for (std::size_t s = 0; s < cfg.train.steps; ++s) {
      losses.push_back(t.step().l2);
      if ((s + 1) % 500 == 0) std::printf("  step %zu  l2 %.5f\n", s + 1, losses.back()), std::fflush(stdout);
    }
    return std::make_pair(t.evaluate_l2(), t.params());
  };
  std::vector<double> la, lb;
  const auto t0 = std::chrono::steady_clock::now();
  const auto [l2_a, params_a] = run(la);
  const double first_run = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto [l2_b, params_b] = run(lb);
  const bool same = la == lb && l2_a == l2_b && params_identical(params_a, params_b);
  return {l2_a < 0.01 && same, "final mean L2 " + fmt("%.5f", l2_a) + " (< 0.01) after 2000 steps, rerun " +
                                   (same ? "bit-identical" : "DIFFERS") + ", one run " + fmt("%.0f s", first_run)};
}

Outcome ablation_topology() {
  TempDir dir("accept6");
  std::vector<std::pair<std::string, double>> losses;
  std::vector<std::size_t> counts;
  std::string detail;
  for (const char* name : {"fapd-sc", "no-capm", "full"}) {
    RunConfig cfg;
    cfg.model = ModelConfig::ablation(name);
    cfg.train.adv_weight = 0;
    cfg.train.steps = 100;
    const auto pairs = fixture_pairs(dir, 1, 4, 64, cfg.model);
    const auto r = train_loop(pairs, cfg, {});
    const auto table = param_count(init_params<float>(cfg.model, 1), cfg.model);
    counts.push_back(table.generator_total);
    losses.emplace_back(name, r.final_l2);
    detail += std::string(name) + " " + std::to_string(table.generator_total) + " params L2 " + fmt("%.5f", r.final_l2) +
              "; ";
  }
  std::sort(counts.begin(), counts.end());
  const bool distinct = std::adjacent_find(counts.begin(), counts.end()) == counts.end();
  std::sort(losses.begin(), losses.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  detail += "ordering after 100 steps: " + losses[0].first + " < " + losses[1].first + " < " + losses[2].first;
  return {distinct, detail};
}

Outcome metric_properties() {
  auto noisy = [](const GrayImage& x, const GrayImage& pattern, double s) {
    GrayImage y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y.pixels[i] = std::clamp(x.pixels[i] + s * pattern.pixels[i], 0.0, 1.0);
    return y;
  };
  double identity_err = 0;
  bool symmetric = true, monotone = true;
  int blur_wins = 0;
  for (std::size_t idx = 0; idx < 10; ++idx) {
    const GrayImage x = to_gray(synth_pair(7, idx, 64).second);
    const auto n = randn_seeded<double>({x.size()}, 1.0, 99, idx);
    const GrayImage pattern(x.height, x.width, n.to_vector());
    identity_err = std::max({identity_err, std::abs(ssim(x, x) - 1), std::abs(fsim(x, x) - 1), std::abs(scoot(x, x) - 1)});
    double prev[3] = {2, 2, 2};
    for (double s : {0.01, 0.05, 0.1, 0.2}) {
      const GrayImage y = noisy(x, pattern, s);
      const double cur[3] = {ssim(x, y), fsim(x, y), scoot(x, y)};
      symmetric = symmetric && cur[0] == ssim(y, x) && cur[1] == fsim(y, x) && cur[2] == scoot(y, x);
      for (int m = 0; m < 3; ++m) {
        monotone = monotone && cur[m] < prev[m];
        prev[m] = cur[m];
      }
    }
    // Blur vs noise at equal MSE: bisect the noise scale.
    const GrayImage b = gaussian_blur(x, 1.0);
    const double target = mse(x, b);
    double lo = 0, hi = 1;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (mse(x, noisy(x, pattern, mid)) < target ? lo : hi) = mid;
    }
    blur_wins += ssim(x, b) > ssim(x, noisy(x, pattern, lo));
  }
  const bool ok = identity_err <= 1e-9 && symmetric && monotone && blur_wins >= 8;
  return {ok, "identity err " + fmt("%.1e", identity_err) + ", symmetric " + (symmetric ? "yes" : "NO") +
                  ", noise sweep monotone " + (monotone ? "yes" : "NO") + ", SSIM prefers blur on " +
                  std::to_string(blur_wins) + "/10"};
}

Outcome checkpoint_determinism() {
  TempDir dir("accept8");
  RunConfig cfg;  // adversarial term on: discriminator state must survive too
  cfg.train.seed = 3;
  const auto pairs = fixture_pairs(dir, 2, 4, 64, cfg.model);
  const std::size_t split = 20, tail = 100;

  Trainer ref(cfg, pairs);
  ref.initialize();
  std::vector<StepLog> ref_log;
  for (std::size_t s = 0; s < split + tail; ++s) {
    const auto l = ref.step();
    if (s >= split) ref_log.push_back(l);
  }

  Trainer first(cfg, pairs);
  first.initialize();
  for (std::size_t s = 0; s < split; ++s) first.step();
  save_checkpoint(dir / "mid.ckpt", first.snapshot());
  Trainer resumed(cfg, pairs);
  resumed.restore(load_checkpoint(dir / "mid.ckpt"));
  std::size_t diverging = 0;
  for (std::size_t s = 0; s < tail; ++s) {
    const auto l = resumed.step();
    diverging += l.l2 != ref_log[s].l2 || l.adv_g != ref_log[s].adv_g || l.adv_d != ref_log[s].adv_d;
  }
  const bool same = params_identical(ref.params(), resumed.params());
  return {diverging == 0 && same, "resume after step " + std::to_string(split) + ", " + std::to_string(tail) +
                                      " continued steps: " + std::to_string(diverging) + " differing losses, parameters " +
                                      (same ? "bit-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"zero-offset equivalence", zero_offset_equivalence}},
      {2, {"gradient suite", gradient_suite}},
      {3, {"shape contract", paper_shapes}},
      {4, {"offset bookkeeping", offset_bookkeeping}},
      {5, {"overfit capacity", overfit_capacity}},
      {6, {"ablation topology", ablation_topology}},
      {7, {"metric properties", metric_properties}},
      {8, {"checkpoint determinism", checkpoint_determinism}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [k, v] : criteria) selected.push_back(k);

  int failures = 0;
  for (int k : selected) {
    const auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion %d\n", k);
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d (%s): %s  %s  [%.1f s]\n", k, it->second.first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
