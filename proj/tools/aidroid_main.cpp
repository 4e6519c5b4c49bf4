#include <iostream>

#include "aidroid/cli.hpp"

int main(int argc, char** argv) { return aidroid::run_cli(argc, argv, std::cout, std::cerr); }
