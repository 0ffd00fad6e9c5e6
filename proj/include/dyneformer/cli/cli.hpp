#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dyneformer::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs one subcommand. `args` excludes the program name. Returns 0 on
/// success, 1 on a runtime error (message on `err`), 2 on a usage error
/// (usage text on `err`).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

} // namespace dyneformer::cli
