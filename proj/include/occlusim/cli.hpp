#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace occlusim {

/// Entry point of the `occlusim` binary. `args` excludes the program name.
/// Errors are reported as one line on `err`:
///   occlusim: error: <subcommand>: <message>
/// and yield exit code 1 (2 for usage errors).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace occlusim
