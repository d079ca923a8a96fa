#include "sflow/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return sflow::run_cli(argc, argv, std::cout, std::cerr); }
