#include "spinglass/cli.hpp"

int main(int argc, char** argv) { return spinglass::cli::main_entry(argc, argv); }
