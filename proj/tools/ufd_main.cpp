#include <iostream>
#include <string>
#include <vector>

#include "ufd/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ufd::run_cli(args, std::cout, std::cerr);
}
