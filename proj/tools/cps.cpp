#include "cps/cli.hpp"

int main(int argc, char** argv) { return cps::cli_main(argc, argv); }
