#include "lmd/cli.hpp"

int main(int argc, char** argv) { return lmd::cli::main(argc, argv); }
