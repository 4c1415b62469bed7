#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hearth/gateway.hpp"

namespace hearth::cli {

// Exit codes, also listed in --help.
inline constexpr int kOk = 0;
inline constexpr int kValidation = 2;  // bad input or usage
inline constexpr int kConnection = 3;
inline constexpr int kStageGate = 4;
inline constexpr int kNotFound = 5;
inline constexpr int kServer = 6;
inline constexpr int kAuth = 7;

struct Options {
    EnvLookup env = process_env;
    bool color = false;
};

/// Runs one command line (argv[0] included). Output goes to `out`, the
/// single-line error to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Options& options = {});

}  // namespace hearth::cli
