#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ivsurv/error.hpp"

namespace ivsurv {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumerical = 4 };

int exit_code_for(ErrorCode code);

/// Entry point of the `ivsurv` executable. Diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ivsurv
