#include <iostream>
#include <string>
#include <vector>

#include "eipl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return eipl::cli::run(args, std::cout, std::cerr, std::cin);
}
