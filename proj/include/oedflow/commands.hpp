#pragma once

#include <ostream>

namespace oedflow {

/// Exit codes shared by all subcommands.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNumerical = 2 };

/// Entry point behind the oedflow executable; argv[0] is the program name.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace oedflow
