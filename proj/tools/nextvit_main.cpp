#include <iostream>

#include "nextvit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nextvit::run_cli(args, std::cout, std::cerr);
}
