#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nextvit {

/// Runs one command line (args exclude the program name). Returns 0 on
/// success, 1 when a check fails and 2 on usage or input errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nextvit
