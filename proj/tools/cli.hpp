#pragma once

#include "uld/agent/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace uld::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kAssertionFailure = 2, kRuntimeFault = 3 };

/// Environment variable naming the default output root (default "runs").
inline constexpr const char* kOutputRootVar = "ULD_OUTPUT_ROOT";

std::filesystem::path output_root();

/// Reads a flat key=value file into `config`. Blank lines and lines starting
/// with '#' are skipped. Unknown keys and malformed lines throw ConfigError.
void load_config_file(const std::filesystem::path& path, agent::RunConfig& config);
/// Every key in registry order, one per line.
std::string config_snapshot(const agent::RunConfig& config);
/// out_dir if set, else <output root>/<env>_seed<seed>.
std::filesystem::path run_directory(const agent::RunConfig& config);

/// Entry point shared by the binary and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uld::cli
