#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace narrmem::cli {

// Parses and runs one command line (args[0] is the program name). Returns
// the process exit code: 0 success, 1 partial failure, 2 usage/config error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace narrmem::cli
