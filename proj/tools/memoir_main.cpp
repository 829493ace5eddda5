#include <iostream>
#include <string>
#include <vector>

#include "memoir/app_shell.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return memoir::run_cli(args, std::cout, std::cerr);
}
