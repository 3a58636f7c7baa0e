#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rasper {

/// Exit codes: 0 success, 1 module error, 2 missing or unreadable input,
/// anything else comes from argument parsing.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitMissingInput = 2;

/// Runs one subcommand (fit, select, pseudo, score, simulate). `args`
/// excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace rasper
