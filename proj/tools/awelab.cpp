#include "awelab/cli.hpp"

int main(int argc, char** argv) { return awelab::cli::cli_main(argc, argv); }
