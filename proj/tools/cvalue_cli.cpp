#include <iostream>

#include "cvalue/cli.hpp"

int main(int argc, char** argv) { return cvalue::cli::run(argc, argv, std::cout, std::cerr); }
