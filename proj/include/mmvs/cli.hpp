#pragma once

namespace mmvs {

// Entry point for the command-line tool; returns the process exit code
// (0 success, 1 invalid input or failed check, 2 I/O error).
int run_cli(int argc, const char* const* argv);

}  // namespace mmvs
