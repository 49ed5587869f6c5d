#include <iostream>

#include "ivsurv/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ivsurv::run_cli(args, std::cout, std::cerr);
}
