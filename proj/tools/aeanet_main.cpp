#include <iostream>
#include <string>
#include <vector>

#include "aeanet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return aeanet::dispatch(args, std::cout, std::cerr).exit_code;
}
