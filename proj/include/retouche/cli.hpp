#pragma once

#include <iosfwd>
#include <string_view>

namespace retouche {

inline constexpr std::string_view tool_version = "0.1.0";

// Exit codes.
inline constexpr int exit_ok = 0;
inline constexpr int exit_flags = 2;
inline constexpr int exit_data = 3;
inline constexpr int exit_fit = 4;
inline constexpr int exit_incompatible = 5;

// `retouche fit|bench|inspect ...`; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace retouche
