#include <iostream>

#include "oedflow/commands.hpp"

int main(int argc, char** argv) { return oedflow::run_cli(argc, argv, std::cout, std::cerr); }
