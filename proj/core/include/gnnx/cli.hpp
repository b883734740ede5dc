#pragma once

#include <string>
#include <vector>

namespace gnnx::cli {

// Entry point behind the command-line tool; takes the argument vector
// without the program name. Exit codes: 0 success, 1 usage error, 2 data or
// file error.
int run(const std::vector<std::string>& args);

}  // namespace gnnx::cli
