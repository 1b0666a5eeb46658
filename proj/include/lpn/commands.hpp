#pragma once

// The `lpn` command-line tool. Kept in the library so tests can drive the
// verbs in-process.

#include <iosfwd>

namespace lpn {

/// Exit codes: 0 success, 1 runtime failure (including a failed selfcheck),
/// 2 bad usage or configuration.
int run_cli(int argc, const char* const* argv);

}  // namespace lpn
