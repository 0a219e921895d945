#include <iostream>

#include "wafl/cli.hpp"

int main(int argc, char** argv) { return wafl::run_cli(argc, argv, std::cout, std::cerr); }
