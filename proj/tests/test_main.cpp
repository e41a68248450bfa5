#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "htl/kernels.hpp"

int main(int argc, char** argv) {
  htl::kernels::configure_runtime();
  doctest::Context context(argc, argv);
  return context.run();
}
