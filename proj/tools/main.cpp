#include "cli.hpp"

int main(int argc, char** argv) { return coldamp::cli::main_entry(argc, argv); }
