#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace camnet {

enum ExitCode { exit_ok = 0, exit_validation = 2, exit_runtime = 3 };

/// Parses `args` (without the program name) and runs one subcommand:
/// simulate | init | online | eval | bench. Messages go to `out` and `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace camnet
