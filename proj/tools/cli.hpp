#ifndef SHIFTBENCH_CLI_HPP
#define SHIFTBENCH_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace shiftbench::cli {

enum ExitCode : int { kOk = 0, kDataError = 1, kUsageError = 2 };

/// Runs one command line (without the program name). Reports go to out,
/// diagnostics and progress to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace shiftbench::cli

#endif  // SHIFTBENCH_CLI_HPP
