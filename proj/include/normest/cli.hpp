#pragma once

namespace normest {

// argv-style entry point shared by main() and the CLI tests. Returns the
// process exit code: 0 success, 2 configuration error, 3 I/O error,
// 4 numeric failure.
int run_cli(int argc, const char* const* argv);

}  // namespace normest
