#pragma once

// Command-line front end. Subcommands: run, calibrate-pairs, simulate,
// spec-sim, report. Every file artifact lands under the --out directory.
// Exit codes: 0 success, 2 partial worker-backend failure (reports still
// emitted), 1 fatal error with a diagnostic on standard error.

#include <string>
#include <vector>

namespace cascade::cli {

int run_cli(int argc, const char* const* argv);

// Convenience form for tests: args exclude the program name.
int run_cli(const std::vector<std::string>& args);

// Top-level help including the config-key reference table.
std::string full_help();

}  // namespace cascade::cli
