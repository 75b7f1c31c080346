#include <iostream>
#include <string>
#include <vector>

#include "gradchain/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return gradchain::cli::run(args, std::cout, std::cerr);
}
