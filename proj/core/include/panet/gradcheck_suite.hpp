#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "panet/gradcheck.hpp"
#include "panet/model.hpp"

namespace panet {

/// Channels scaled down by 8, one 3x3 CAPM branch, Gaussian offset init:
/// small enough for a full finite-difference sweep on 24x24 inputs.
ModelConfig tiny_model_config();

struct SuiteOptions {
  double op_tolerance = 1e-4;
  double model_tolerance = 1e-3;  ///< end-to-end synthesis network
  /// Op family whose analytic gradients are scaled by 1.01 (fault injection).
  std::string corrupt;
  std::uint64_t seed = 7;
};

struct SuiteCase {
  std::string name;
  std::string op;  ///< family name accepted by SuiteOptions::corrupt
  double tolerance = 0;
  GradCheckReport report;
  double seconds = 0;

  bool passed() const noexcept { return report.max_rel_error() < tolerance; }
};

/// Op families in suite order.
std::vector<std::string> gradcheck_ops();

/// Runs every case in 64-bit. InvalidParam if `corrupt` names no family.
std::vector<SuiteCase> run_gradcheck_suite(const SuiteOptions& options = {});

/// Fixed-width table, one row per case.
std::string format_suite_table(const std::vector<SuiteCase>& cases);

}  // namespace panet
