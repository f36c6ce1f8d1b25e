#include <iostream>

#include "cpgnn/cli.hpp"

int main(int argc, char** argv) { return cpgnn::run_cli(argc, argv, std::cout, std::cerr); }
