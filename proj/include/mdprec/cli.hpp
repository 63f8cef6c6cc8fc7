#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mdprec {

// Exit codes of the batch driver.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNotConverged = 3,
};

// Runs `mdprec <subcommand> ...`; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdprec
