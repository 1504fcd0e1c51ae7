#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "panet/tensor.hpp"

namespace panet {

using TensorList = std::vector<Tensor<double>>;

/// An operation under test: a forward map from inputs (data and parameters
/// alike) to one output, plus its analytic backward, which receives the
/// upstream gradient and returns one gradient per input.
struct DifferentiableOp {
  std::vector<std::string> input_names;
  std::function<Tensor<double>(const TensorList&)> forward;
  std::function<TensorList(const TensorList&, const Tensor<double>&)> backward;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  /// Finite-difference step relative to max(1, |x|).
  double rel_step = 1e-5;
  /// Gradients smaller than this fraction of an input's largest analytic
  /// gradient are compared against that floor instead of their own magnitude.
  double relative_floor = 1e-3;
  /// 0 probes every element; otherwise a seeded sample of this many elements
  /// (always including the largest-gradient element).
  std::size_t max_probes_per_input = 0;
  std::uint64_t seed = 0x5eed;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t probes = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  double max_rel_error() const noexcept;
  bool passed() const noexcept { return max_rel_error() < tolerance; }
  std::string to_string() const;
};

/// Compares the analytic backward against central finite differences of the
/// scalar projection L = sum(r * forward(inputs)) with seeded Gaussian r.
/// Throws GradCheckFailure if the forward yields a non-finite value.
GradCheckReport gradcheck(const DifferentiableOp& op, const TensorList& inputs,
                          const GradCheckOptions& options = {});

}  // namespace panet
