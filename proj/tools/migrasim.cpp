#include "migrasim/cli.hpp"

int main(int argc, char** argv) { return migrasim::cli_main(argc, argv); }
