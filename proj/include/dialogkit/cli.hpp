#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace dialogkit {

inline constexpr const char* kToolName = "dialogkit";
inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitError = 2;

using GetEnv = std::function<const char*(const char*)>;

// args excludes the program name. Data goes to `out` or named files, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const GetEnv& getenv_fn);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dialogkit
