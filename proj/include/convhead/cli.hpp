#pragma once

#include <string>
#include <vector>

namespace convhead {

/// Entry point behind the `convhead` binary. Returns 0 on success, 1 on
/// usage/config errors, 2 on runtime errors. Tests drive it in-process.
int run_cli(const std::vector<std::string>& args);

}  // namespace convhead
