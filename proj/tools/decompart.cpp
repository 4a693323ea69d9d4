#include <string>
#include <vector>

#include "decompart/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return decompart::run_command(args);
}
