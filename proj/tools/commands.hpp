#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dcreg::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,       // bad arguments, unreadable input, invalid config or schema
  kExitFitFailure = 3,  // no (approach, censoring, t0) fit converged
};

// args excludes the program name: {"fit", "--data", "d.csv", ...}
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dcreg::cli
