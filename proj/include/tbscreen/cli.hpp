#pragma once

#include <string>
#include <vector>

namespace tbscreen {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitIo = 4,
  kExitNumeric = 5,
};

/// Entry point of the `tbscreen` tool. Never throws; failures map to the
/// exit codes above.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace tbscreen
