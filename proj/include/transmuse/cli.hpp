#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace transmuse {

/// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Runs one subcommand. `args` excludes the program name. Failures print a
/// single-line JSON object to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace transmuse
