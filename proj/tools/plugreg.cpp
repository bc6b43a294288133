#include <iostream>

#include "plugreg/cli.hpp"

int main(int argc, char** argv) { return plugreg::run_cli(argc, argv, std::cout, std::cerr); }
