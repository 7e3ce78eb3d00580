#include <iostream>

#include "ars/cli.hpp"

int main(int argc, char** argv) {
  return ars::cli_dispatch(argc, argv, std::cout, std::cerr);
}
