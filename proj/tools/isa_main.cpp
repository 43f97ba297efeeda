#include "isa/cli.hpp"

int main(int argc, char** argv) { return isa::cli::main(argc, argv); }
