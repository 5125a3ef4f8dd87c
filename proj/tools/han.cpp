#include <iostream>

#include "han/cli.hpp"

int main(int argc, char** argv) { return han::run_cli(argc, argv, std::cout, std::cerr); }
