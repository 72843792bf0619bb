#pragma once

#include <iosfwd>

namespace fimfuse::cli {

// Exit codes are a stable scripting contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

inline constexpr unsigned long long kDefaultSeed = 0x5EED;

/// Entry point for `fimfuse synth|train|eval|interpret|inspect`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fimfuse::cli
