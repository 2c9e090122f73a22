#include <iostream>

#include "fbgcn/cli.hpp"

int main(int argc, char** argv) { return fbgcn::cli::run(argc, argv, std::cout, std::cerr); }
