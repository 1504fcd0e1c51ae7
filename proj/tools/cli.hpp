#pragma once

#include <iosfwd>

namespace panet::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kUsage = 2,
  kIoError = 3,
  kDiverged = 4,
  kCheckpointError = 5,
};

/// Entry point of the `panet` tool; writes normal output to `out` and
/// diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace panet::cli
