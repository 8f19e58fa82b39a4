#pragma once

#include <ostream>

namespace waitlist {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitNotConverged = 4;

/// Subcommands generate, first-stage, fit, counterfactual, report, bench-mia.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace waitlist
