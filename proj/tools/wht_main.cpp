#include <iostream>

#include "wht/cli.hpp"

int main(int argc, char** argv) { return wht::cli::run(argc, argv, std::cout, std::cerr); }
