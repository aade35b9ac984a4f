// Command-line front end: runs the tasks listed in a TOML experiment config.
#include <iostream>

#include <CLI11.hpp>

#include "stemper/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Simulated tempering experiments and bound verification"};
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> replicas;
  bool quiet = false;
  app.add_option("--config", config_path, "TOML experiment config")->required();
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "override every seed in the config");
  app.add_option("--replicas", replicas, "override sampler.replicas");
  app.add_flag("--quiet", quiet, "suppress progress output");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  stemper::RunFlags flags;
  flags.seed = seed;
  flags.replicas = replicas;
  flags.quiet = quiet;
  try {
    return stemper::run_experiment_file(config_path, out_dir, flags, std::clog, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
