#include <iostream>

#include "mbstat/cli.hpp"

int main(int argc, char** argv) { return mbstat::run_cli(argc, argv, std::cout, std::cerr); }
