#include "lassocd/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return lassocd::cli::run_cli(argc, argv, std::cout, std::cerr); }
