#pragma once

namespace sslhar::cli {

/// Entry point behind main(): parses the subcommand and executes it.
/// Returns 0 on success, 2 for invalid configuration (naming the offending
/// key), 1 for runtime failures, each with a one-line diagnostic on stderr.
int run(int argc, const char* const* argv);

}  // namespace sslhar::cli
