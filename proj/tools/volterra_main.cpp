#include <unistd.h>

#include <iostream>
#include <string>
#include <vector>

#include "volterra/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  const bool scripted = isatty(fileno(stdout)) == 0;
  return volterra::cli::run(args, std::cout, std::cerr, scripted);
}
