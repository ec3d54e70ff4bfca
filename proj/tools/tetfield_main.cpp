#include <iostream>

#include "cli_commands.hpp"
#include "tetfield/common.hpp"

int main(int argc, char** argv) {
  tetfield::retain_freed_memory();
  return tetfield::cli::run(argc, argv, std::cout, std::cerr);
}
