#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace canopyfuse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUnknownCommand = 2;
inline constexpr int kExitValidation = 3;

inline constexpr const char* kVersion = "0.1.0";

/// Runs one subcommand. `args` excludes the program name. Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Configures the process-wide logger from CANOPYFUSE_LOG (error|warn|info|debug).
void init_logging();

}  // namespace canopyfuse::cli
