#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace casejudge::cli {

enum ExitCode : int { ok = 0, data_error = 1, usage_error = 2, interrupted = 130 };

/// Runs one command line (without the program name). Results go to `out`,
/// diagnostics to `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace casejudge::cli
