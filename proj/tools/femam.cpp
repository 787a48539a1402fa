#include <iostream>

#include "femam/cli.hpp"

int main(int argc, char** argv) { return femam::run_cli(argc, argv, std::cout, std::cerr); }
