#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stemper/config.hpp"

namespace stemper {

struct RunFlags {
  std::optional<std::uint64_t> seed;  ///< replaces every seed in the config
  std::optional<int> replicas;
  bool quiet = false;
};

struct ExperimentResult {
  int status = 0;  ///< 0 all reports pass, 1 some report failed
  std::vector<std::string> failing;
  std::vector<std::filesystem::path> files;  ///< relative to the output directory
};

/// Runs the tasks in order and writes outputs plus manifest.json under
/// `out_dir`. Configuration problems surface as ConfigError.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                const RunFlags& flags, std::ostream& log);

/// Loads `config_path` and runs it. Returns the process exit status:
/// 0 pass, 1 failing reports (named on `err`), 2 configuration error.
int run_experiment_file(const std::string& config_path, const std::filesystem::path& out_dir,
                        const RunFlags& flags, std::ostream& log, std::ostream& err);

}  // namespace stemper
