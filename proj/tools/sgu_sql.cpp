#include <iostream>

#include "sgusql/cli.hpp"

int main(int argc, char** argv) { return sgusql::cli::run(argc, argv, std::cout, std::cerr); }
