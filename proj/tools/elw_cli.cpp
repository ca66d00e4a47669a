#include <iostream>

#include "elw_commands.hpp"

int main(int argc, char** argv) { return elw::cli::run(argc, argv, std::cout, std::cerr); }
