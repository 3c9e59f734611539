#pragma once

#include <string>
#include <vector>

namespace cavlab {

/// Entry point of the `cavlab` binary, exposed so tests can drive the CLI
/// in-process. Exit codes: 0 success, 2 config error, 3 domain error,
/// 4 verification assertion failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace cavlab
