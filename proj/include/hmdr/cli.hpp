#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace hmdr {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

/// Entry point of the `hmdr` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace hmdr
