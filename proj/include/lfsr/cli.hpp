#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lfsr::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericFailure = 3 };

struct CommandOutcome {
  int exit_code = kOk;
  std::string message;  // one-line summary or the error
  std::string json;     // machine-readable summary
};

/// Runs one command line (args[0] is the program name). Progress and the
/// summary line go to `err`; with --json the JSON summary goes to `out`, and
/// --help text goes to `out`. Never throws.
CommandOutcome run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast embedded invariant checks behind `selftest`.
std::vector<SelftestCheck> run_selftest(std::uint64_t seed);

}  // namespace lfsr::cli
