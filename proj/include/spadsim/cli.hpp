#pragma once

#include <iosfwd>

namespace spadsim {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

/// Subcommands: simulate <config>, validate <config>, preset list,
/// preset show <name>, keyrate --m --eta --n-mean --xi --bin-ps.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace spadsim
