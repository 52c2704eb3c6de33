#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hsics::cli {

inline constexpr const char* kToolVersion = "1.0.0";

/// Runs one command line (without the program name). Returns the exit
/// status: 0 success, 1 invalid arguments or inputs, 2 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace hsics::cli
