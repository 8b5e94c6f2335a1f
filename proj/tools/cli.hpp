#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lsvt {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // data, I/O or numeric failure
inline constexpr int kExitUsage = 2;    // unknown subcommand, option or config key
inline constexpr int kExitConfig = 3;   // config value rejected by validation

// `args` excludes the program name. Progress goes to `out`; failures print exactly one line
// `error: <kind>: <message>` to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lsvt
