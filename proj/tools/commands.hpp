#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "extc/common/error.hpp"

namespace extc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUnexpected = 1;
inline constexpr int kExitUsage = 2;

/// 10 + the error's position in Errc.
int exit_status(Errc code);

/// Runs one subcommand. `args` excludes the program name. Results go to
/// `out`, usage text and errors to `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace extc::cli
