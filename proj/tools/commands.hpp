#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cps/config.hpp"
#include "cps/error.hpp"

namespace cps::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

/// Whole command line, argv[0] included. Returns the process exit code.
int run_cli(const std::vector<std::string>& args);

/// Runs one subcommand into `out` and writes its MANIFEST. Throws cps::Error.
/// Returns kExitNumeric when outputs were written but did not converge.
int run_command(const std::string& command, RunConfig config, const std::filesystem::path& out,
                const std::filesystem::path& kernel_cache);

int exit_code_for(ErrorKind kind);

}  // namespace cps::cli
