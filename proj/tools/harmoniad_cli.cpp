#include <iostream>

#include "harmoniad/cli.hpp"

int main(int argc, char** argv) { return harmoniad::cli::run(argc, argv, std::cout, std::cerr); }
