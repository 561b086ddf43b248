#include <iostream>

#include "poolflip/cli.hpp"

int main(int argc, char** argv) { return poolflip::cli::run(argc, argv, std::cout, std::cerr); }
