#include "survsr/cli.hpp"

int main(int argc, char** argv) { return survsr::run_cli(argc, argv); }
