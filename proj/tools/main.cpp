#include "dynorank/cli.hpp"

int main(int argc, char** argv) { return dynorank::cli::run(argc, argv); }
