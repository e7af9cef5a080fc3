#include "cdpde/cli.hpp"

int main(int argc, char** argv) { return cdpde::run_cli(argc, argv); }
