#pragma once

#include <string>

namespace dynorank::cli {

// Entry point of the `dynorank` tool. Exit codes: 0 success, 2 invalid
// input, 3 numerical failure.
int run(int argc, char** argv);

// The defaults table shown by --help.
std::string defaults_table();

}  // namespace dynorank::cli
