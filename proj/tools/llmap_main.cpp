#include <string>
#include <vector>

#include "llmap/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return llmap::run_cli(args);
}
