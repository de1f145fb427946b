#include <iostream>

#include "slgan/cli.hpp"

int main(int argc, char** argv) { return slgan::run_cli(argc, argv, std::cout, std::cerr); }
