#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ufd {

/// Process exit statuses of the `ufd` tool.
enum ExitStatus : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitInternal = 3 };

/// Runs the `ufd` command line. `args` excludes the program name. Normal
/// output goes to `out`, one-line diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ufd
