#include <vector>

#include "anmt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return anmt::run_command(args);
}
