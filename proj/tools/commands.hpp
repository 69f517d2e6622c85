#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hdx::cli {

// Exit codes: 0 success, 2 usage error, 3 data/format error, 4 runtime/numeric error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

// Runs one command line (args excludes the program name). Results go to
// `out`, the one-line diagnostic for a failure goes to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Path of the manifest written next to a report.
std::string manifest_path(const std::string& report_path);

}  // namespace hdx::cli
