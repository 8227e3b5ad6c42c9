#include "fetaval/cli.hpp"

int main(int argc, char** argv) { return fetaval::run_cli(argc, argv); }
