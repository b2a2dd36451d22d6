#include "casr/cli.hpp"

int main(int argc, char** argv) { return casr::cli_main(argc, argv); }
