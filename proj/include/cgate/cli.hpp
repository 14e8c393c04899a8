#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cgate {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // operational error, or failed grid cells
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNoMatch = 3;  // fingerprint-verify decided "no match"

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace cgate
