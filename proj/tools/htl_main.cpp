#include <iostream>
#include <string>
#include <vector>

#include "htl/cli.hpp"
#include "htl/kernels.hpp"

int main(int argc, char** argv) {
  htl::kernels::configure_runtime();
  std::vector<std::string> args(argv + 1, argv + argc);
  return htl::run_command(args, std::cout, std::cerr);
}
