#pragma once

#include <string>
#include <vector>

namespace pdwols {

// Runs one CLI invocation (args exclude the program name). Returns the exit
// code: 0 ok, 2 parse error, 3 numeric failure, 4 configuration error.
int run_cli(const std::vector<std::string>& args);

}  // namespace pdwols
