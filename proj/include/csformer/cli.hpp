#pragma once

#include <string>
#include <vector>

namespace csformer {

// Parses and executes one command line (without the program name). Never
// throws; errors are printed to stderr and folded into the exit code:
// 0 success, 2 usage or config, 3 data, 4 numerics, 1 anything else.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

} // namespace csformer
