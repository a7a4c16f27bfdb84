#include <iostream>

#include "sttn/commands.hpp"

int main(int argc, char** argv) { return sttn::run_cli(argc, argv, std::cout, std::cerr); }
