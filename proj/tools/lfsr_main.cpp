#include <iostream>
#include <string>
#include <vector>

#include "lfsr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return lfsr::cli::run(args, std::cout, std::cerr).exit_code;
}
