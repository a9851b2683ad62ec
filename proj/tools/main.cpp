#include "cli.hpp"

int main(int argc, char** argv) { return ebsdcs::cli::run(argc, argv); }
