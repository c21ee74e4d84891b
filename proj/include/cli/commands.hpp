#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cli {

// Shortest round-trip decimal text for a double; the one formatter behind
// every stdout table and CSV the commands emit.
std::string format_double(double v);

// Runs one command line (argv without the program name). Normal output goes
// to `out`, diagnostics and warnings to `err`. Returns the process exit
// code: 0 success, 1 numeric or training failure, 2 usage or config
// failure.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace cli
