#pragma once

#include <string>
#include <vector>

namespace decompart {

/// Runs one CLI invocation (argv without the program name).
/// Exit codes: 0 success, 1 usage, 2 model error, 3 numerical failure,
/// 4 invariant failure.
int run_command(const std::vector<std::string>& argv);

}  // namespace decompart
