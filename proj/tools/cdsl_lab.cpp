#include <iostream>

#include "cdsl/cli.hpp"

int main(int argc, char** argv) { return cdsl::cli::main(argc, argv, std::cout, std::cerr); }
