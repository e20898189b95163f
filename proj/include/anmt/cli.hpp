#pragma once

#include <string>
#include <vector>

namespace anmt {

// Dispatches one command-line invocation (arguments without the program
// name). Returns the process exit status: 0 when every requested artifact
// was written.
int run_command(const std::vector<std::string>& args);

}  // namespace anmt
