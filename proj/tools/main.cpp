#include "cgate/cli.hpp"

int main(int argc, char** argv) { return cgate::run_cli(argc, argv); }
