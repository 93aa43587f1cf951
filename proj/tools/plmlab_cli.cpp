#include <iostream>

#include "plmlab/cli.hpp"

int main(int argc, char** argv) { return plmlab::cli_main(argc, argv, std::cout, std::cerr); }
