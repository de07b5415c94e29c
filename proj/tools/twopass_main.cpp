#include <iostream>

#include "twopass/cli.hpp"

int main(int argc, char** argv) {
  return twopass::run_cli(argc, argv, std::cout, std::cerr);
}
