#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kpgen::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnv = "KPGEN_CONFIG";

/// Runs one command. `args` excludes the program name. Returns the exit code;
/// failures print a single diagnostic line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kpgen::cli
