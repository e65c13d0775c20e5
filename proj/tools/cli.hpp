#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stgin::cli {

/// Runs one subcommand. `args` excludes the program name. Returns the process
/// exit code; failures print one JSON line {"error":{"kind":...,"message":...}}
/// to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// SHA-256 of a file as lowercase hex.
std::string sha256_file(const std::string& path);

}  // namespace stgin::cli
