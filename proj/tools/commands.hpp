#pragma once

#include <ostream>
#include <stdexcept>

namespace dyndiff::cli {

/// Bad flags or configuration; maps to exit code 2.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Parses argv and runs one subcommand: train, forecast, evaluate, hist or
/// synth. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dyndiff::cli
