#pragma once

#include "kedmd/equivalence.hpp"

namespace kedmd::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfigError = 2,
  kNumericAbort = 3,
  kDivergence = 4,
  kIoError = 5,
  kCheckFailed = 6,
};

/// Injection points for tests.
struct Hooks {
  /// Replaces the random kernel sums drawn by `equivalence-check`.
  KernelFactory equivalence_kernel;
};

/// Parses argv, runs one subcommand and returns its exit code; never throws.
int run(int argc, const char* const* argv, const Hooks& hooks = {});

/// Environment variable naming the default output directory.
inline constexpr const char* kOutEnv = "KEDMD_OUT";

}  // namespace kedmd::cli
