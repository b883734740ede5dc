#include <string>
#include <vector>

#include "gnnx/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gnnx::cli::run(args);
}
