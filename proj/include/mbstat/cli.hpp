#pragma once

#include <iosfwd>

namespace mbstat {

/// Entry point of the `mbstat` tool. Returns the process exit code:
/// 0 success, 2 input or configuration error, 3 numeric failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mbstat
