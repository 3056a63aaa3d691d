#include <iostream>
#include <string>
#include <vector>

#include "stgnn/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stgnn::cli::run(args, std::cout, std::cerr);
}
