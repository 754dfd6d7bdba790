#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mdvit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Seed used when --seed is absent.
inline constexpr unsigned long long kDefaultSeed = 42;

/// Entry point behind the `mdvit` binary. `args` excludes the program name.
/// Verbs: train, eval, synth, params, compare. Returns 0 on success, 2 on a
/// usage error and 1 on any runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdvit::cli
