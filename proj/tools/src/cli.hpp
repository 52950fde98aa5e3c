#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace branchmoments::cli {

/// Runs one subcommand. Returns 0 on success, 1 on a domain error (message on
/// `err`), 2 on a usage error. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace branchmoments::cli
