#include <iostream>

#include "sofa/cli.hpp"

int main(int argc, char** argv) { return sofa::cli::run(argc, argv, std::cout, std::cerr); }
