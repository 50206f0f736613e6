#pragma once

#include <string>
#include <vector>

namespace plat {

// Command-line entry point (args exclude the program name). Exit codes:
// 0 success, 2 usage/config error, 3 missing upstream artifact, 1 other
// runtime failure.
int cli_main(const std::vector<std::string>& args);

}  // namespace plat
