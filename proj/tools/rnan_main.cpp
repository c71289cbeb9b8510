#include "rnan/cli.hpp"

int main(int argc, char** argv) { return rnan::cli_main(argc, argv); }
