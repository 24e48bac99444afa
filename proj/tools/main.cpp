#include <iostream>

#include "tempodet/cli.hpp"

int main(int argc, char** argv) { return tempodet::cli::run(argc, argv, std::cout, std::cerr); }
