#pragma once

#include <iosfwd>

namespace tetfield::cli {

/// Parses and runs one subcommand. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tetfield::cli
