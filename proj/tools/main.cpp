#include "cli.hpp"

int main(int argc, char** argv) { return atx::cli::main(argc, argv); }
