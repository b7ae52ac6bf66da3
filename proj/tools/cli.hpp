#pragma once

#include <iosfwd>

namespace icofact::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

// Runs one subcommand (mesh | synth | factorize | compare-extrapolation |
// benchmark | export). Diagnostics go to `err` as a single line prefixed
// "error[usage]:" or "error[runtime]:".
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace icofact::cli
