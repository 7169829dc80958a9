#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vrfaudit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitComponentFailure = 1;
inline constexpr int kExitFatal = 2;

/// Subcommands: audit, diff, trend, export, catalog-check. `args` excludes
/// the program name. Diagnostics go to `err` as one JSON object per line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vrfaudit::cli
