#pragma once

#include <string>
#include <vector>

namespace grade {

// Full CLI entry point. Returns the process exit code: 0 success, 1
// validation failure, 2 backend failure, 64 usage error.
int run_cli(std::vector<std::string> args);
int run_cli(int argc, char** argv);

}  // namespace grade
