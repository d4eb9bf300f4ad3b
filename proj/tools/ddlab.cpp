#include "ddlab/cli.hpp"

int main(int argc, char** argv) { return ddlab::run_cli(argc, argv); }
