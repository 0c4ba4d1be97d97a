#pragma once

#include <string>
#include <vector>

namespace llmap {

// Runs one CLI invocation (args without the program name) and returns the
// process exit status. Factored out of main() so tests can drive commands
// in-process.
int run_cli(const std::vector<std::string>& args);

}  // namespace llmap
