#pragma once

// Command-line front end: `homog <subcommand> --config <path> [--seed N]
// [--out DIR] [--threads K]`. Exit codes: 0 all criteria pass, 1 a criterion
// failed, 2 parse or validation error, 3 numerical failure.

#include <ostream>
#include <string>
#include <vector>

namespace homog::cli {

enum Exit { kPass = 0, kFailed = 1, kInvalid = 2, kNumerical = 3 };

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace homog::cli
