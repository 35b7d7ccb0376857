// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace moelab::harness {

/// Exit statuses of the command-line tool.
enum ExitCode : int { exit_ok = 0, exit_error = 1, exit_usage = 2 };

/// Runs the moelab command line. Results go to `out`; failures print
/// {"error": kind, "message": text} on `err` and return a nonzero status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace moelab::harness
