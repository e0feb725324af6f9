#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ctxscope::cli {

// Runs one subcommand. `args` excludes the program name. Returns 0 on
// success, 1 on a domain error (one JSON line on `err`) and 2 on a usage or
// configuration error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int dispatch(int argc, char** argv);

}  // namespace ctxscope::cli
