#include "sntf/cli.hpp"

int main(int argc, char** argv) { return sntf::cli::main(argc, argv); }
