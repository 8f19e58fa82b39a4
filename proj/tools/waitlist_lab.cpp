#include <iostream>

#include "waitlist/cli.hpp"

int main(int argc, char** argv) { return waitlist::run_cli(argc, argv, std::cout, std::cerr); }
