#include <iostream>

#include "retouche/cli.hpp"

int main(int argc, char** argv) { return retouche::run_cli(argc, argv, std::cout, std::cerr); }
