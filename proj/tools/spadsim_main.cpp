#include "spadsim/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return spadsim::run_cli(argc, argv, std::cout, std::cerr); }
