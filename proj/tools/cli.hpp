#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace audiomt::cli {

// Runs one command; returns the process exit code (0 ok, 1 usage, 2 data,
// 3 numerical failure).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace audiomt::cli
