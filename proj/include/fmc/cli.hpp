#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fmc {

inline constexpr const char* version = "0.1.0";

// Runs one command. Exit codes: 0 ok, 1 unexpected, 2 usage or config,
// 3 numerical failure, 4 I/O.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

} // namespace fmc
