#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stemper/errors.hpp"
#include "stemper/finitelab.hpp"
#include "stemper/ladder.hpp"
#include "stemper/targets.hpp"
#include "stemper/tempering.hpp"
#include "stemper/zconst.hpp"

namespace stemper {

/// Bad configuration. `line` is 0 when the problem has no source position.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, std::string message, int line = 0, int column = 0);
  const std::string& field() const { return field_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string field_;
  int line_;
  int column_;
};

struct TargetConfig {
  std::string potential = "isotropic";  ///< isotropic | diagonal
  int dim = 2;
  std::vector<double> curvature;        ///< diagonal only
  std::optional<double> smoothness;     ///< declared L (defaults from curvature)
  std::optional<double> convexity;      ///< declared m
  std::vector<double> weights;          ///< empty: uniform
  std::vector<std::vector<double>> modes;
  std::string mode_rule;                ///< used when `modes` is empty: antipodal | sphere
  int components = 2;
  double displacement = 4.0;            ///< D for the mode rule
  std::uint64_t mode_seed = 0;
};

struct LadderConfig {
  std::string kind = "auto";  ///< auto | explicit
  std::vector<double> betas;
  std::vector<double> zeta;   ///< pseudo-log-weights, empty: zeros
};

struct SamplerConfig {
  std::string proposal = "rwm";
  std::optional<double> h;  ///< unset: 1/(L d) for RWM, step_sizes() for MALA
  double c = 0.01;
  double eta = 1.0;
  double epsilon = 0.1;
  double alpha = 0.5;
  double q_adj = 0.5;
  bool lazy = true;
  std::uint64_t seed = 1;
  std::uint64_t steps = 10000;
  std::uint64_t thin = 1;
  int replicas = 1;
};

struct FiniteConfig {
  CampaignOptions campaign;
  int comparison_pairs = 100;
  int tv_chains = 100;
  int tv_horizon = 1000;
};

struct BoundsConfig {
  std::uint64_t n_points = 1000;
  std::uint64_t n_mc = 10000;
  double h = 0.25;  ///< RWM step for the counterexample witness
  double s = 0.0;
  std::uint64_t seed = 1;
};

struct SweepConfig {
  std::vector<int> dims{1, 2, 4, 8};
  std::vector<double> displacements{1.0, 2.0, 4.0, 8.0};
  double smoothness = 1.0;
  double convexity = 1.0;
};

struct ExperimentConfig {
  std::vector<std::string> tasks;
  std::optional<TargetConfig> target;
  LadderConfig ladder;
  std::optional<SamplerConfig> sampler;
  CalibrationOptions calibrate;
  FiniteConfig finite;
  BoundsConfig bounds;
  std::optional<SweepConfig> sweep;
};

inline const std::vector<std::string>& known_tasks() {
  static const std::vector<std::string> t{"sample", "calibrate", "verify-finite", "verify-bounds", "sweep"};
  return t;
}

/// Parses TOML text. `source` names the file in diagnostics.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "config");
ExperimentConfig load_config(const std::string& path);
/// Canonical TOML for a config; parse_config(to_toml(c)) reproduces c.
std::string to_toml(const ExperimentConfig& config);

MixtureSpec build_spec(const TargetConfig& target);
Ladder build_configured_ladder(const ExperimentConfig& config, const MixtureSpec& spec);

}  // namespace stemper
