#pragma once

#include <string>
#include <vector>

namespace fe::app {

/// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
int cli_main(int argc, char** argv);
int cli_main(const std::vector<std::string>& args);

}  // namespace fe::app
