#include "spf/cli.hpp"

int main(int argc, char** argv) { return spf::cli::run(argc, argv); }
