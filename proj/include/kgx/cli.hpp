#pragma once

#include <string>
#include <vector>

namespace kgx::cli {

/// Entry point behind the kgx binary. Returns the process exit code; all
/// errors surface as a single "error: ..." line on stderr.
int run(const std::vector<std::string>& args);

}  // namespace kgx::cli
