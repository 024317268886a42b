#include "ctwfe/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ctwfe::cli::run(argc, argv, std::cout, std::cerr); }
