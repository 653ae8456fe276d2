#ifndef OFFPOLICY_TOOLS_APP_HPP_
#define OFFPOLICY_TOOLS_APP_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace offpolicy::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kIo = 3,
  kValidation = 4,
  kNumerical = 5,
};

// Runs one command line (args exclude the program name) and returns the
// process exit code. Failures print one JSON line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace offpolicy::cli

#endif  // OFFPOLICY_TOOLS_APP_HPP_
