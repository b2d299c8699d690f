#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pointmt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitInternalError = 2;

/// Entry point of the `pmt` tool. Returns 0 on success, 1 on a user error
/// (bad flag, config, data or path) and 2 on an internal invariant breach.
int run_cli(int argc, char** argv);

/// Same with the program name omitted and explicit streams.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pointmt
