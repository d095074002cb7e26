#pragma once

// Command-line front end: synth-data, train, calibrate, evaluate, inspect.

#include <iosfwd>
#include <string>
#include <vector>

namespace vsdepth {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;  // bad arguments or configuration

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace vsdepth
