#include "panet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "panet/random.hpp"

namespace panet {

double GradCheckReport::max_rel_error() const noexcept {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    char line[256];
    std::snprintf(line, sizeof line, "  %-24s max_rel=%.3e  probes=%zu  (idx %zu: analytic %.6e numeric %.6e)",
                  e.name.c_str(), e.max_rel_error, e.probes, e.worst_index, e.analytic, e.numeric);
    os << line << '\n';
  }
  return os.str();
}

namespace {

double projected(const Tensor<double>& out, const Tensor<double>& weights, const char* stage) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (!std::isfinite(out[i])) {
      throw GradCheckFailure(std::string("gradcheck: non-finite forward output during ") + stage +
                             " at flat index " + std::to_string(i) + " of " +
                             shape_str(out.shape()));
    }
    s += weights[i] * out[i];
  }
  return s;
}

std::vector<std::size_t> probe_indices(const Tensor<double>& grad, std::size_t max_probes,
                                       std::uint64_t seed, std::uint64_t stream) {
  std::vector<std::size_t> idx(grad.numel());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_probes == 0 || max_probes >= idx.size()) return idx;
  // Seeded partial Fisher-Yates; the largest gradient element always joins.
  const CounterRng rng(seed, stream);
  for (std::size_t i = 0; i < max_probes; ++i) {
    const std::size_t j = i + rng.below(i, idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_probes);
  std::size_t argmax = 0;
  for (std::size_t i = 1; i < grad.numel(); ++i) {
    if (std::abs(grad[i]) > std::abs(grad[argmax])) argmax = i;
  }
  if (std::find(idx.begin(), idx.end(), argmax) == idx.end()) idx.back() = argmax;
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport gradcheck(const DifferentiableOp& op, const TensorList& inputs,
                          const GradCheckOptions& options) {
  if (op.input_names.size() != inputs.size()) {
    throw InvalidParam("gradcheck: input_names and inputs differ in length");
  }
  const Tensor<double> out0 = op.forward(inputs);
  Tensor<double> weights = out0.empty() ? Tensor<double>(out0.shape())
                                        : randn_seeded<double>(out0.shape(), 1.0, options.seed);
  projected(out0, weights, "reference evaluation");

  const TensorList grads = op.backward(inputs, weights);
  if (grads.size() != inputs.size()) {
    throw GradCheckFailure("gradcheck: backward returned " + std::to_string(grads.size()) +
                           " gradients for " + std::to_string(inputs.size()) + " inputs");
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  TensorList probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!grads[k].same_shape(inputs[k])) {
      throw GradCheckFailure("gradcheck: gradient for '" + op.input_names[k] + "' has shape " +
                             shape_str(grads[k].shape()) + ", expected " +
                             shape_str(inputs[k].shape()));
    }
    GradCheckEntry entry;
    entry.name = op.input_names[k];
    double grad_scale = 0.0;
    for (double g : grads[k].data()) grad_scale = std::max(grad_scale, std::abs(g));
    const double floor = std::max(options.relative_floor * grad_scale, 1e-12);

    const auto indices = probe_indices(grads[k], options.max_probes_per_input, options.seed, k + 1);
    for (std::size_t i : indices) {
      const double x = inputs[k][i];
      const double h = options.rel_step * std::max(1.0, std::abs(x));
      probe[k][i] = x + h;
      const double plus = projected(op.forward(probe), weights, "probe +h");
      probe[k][i] = x - h;
      const double minus = projected(op.forward(probe), weights, "probe -h");
      probe[k][i] = x;

      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = grads[k][i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel >= entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
      ++entry.probes;
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace panet
