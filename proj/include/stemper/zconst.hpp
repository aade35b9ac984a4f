#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stemper/ladder.hpp"
#include "stemper/targets.hpp"
#include "stemper/tempering.hpp"

namespace stemper {

struct RatioEstimate {
  double ratio = 1.0;      ///< estimate of Z*_{i+1} / Z*_i
  double log_ratio = 0.0;
  double std_error = 0.0;  ///< of `ratio`
  double log_std_error = 0.0;
  std::size_t samples = 0;
};

inline constexpr std::size_t kMinRatioSamples = 1000;

/// Z*_{i+1}/Z*_i = E_{pi*_i}[exp(-(beta_{i+1} - beta_i) U)] from draws at
/// level i, averaged in log space. Standard errors are jackknife estimates
/// multiplied by sqrt(correlation_time) for correlated draws.
RatioEstimate estimate_level_ratio(std::span<const Vector> samples, const MixtureSpec& spec, double beta,
                                   double beta_next, double correlation_time = 1.0);
/// Same, from precomputed potentials U(x_k).
RatioEstimate estimate_level_ratio_from_potentials(std::span<const double> potentials, double beta,
                                                   double beta_next, double correlation_time = 1.0);

struct CalibrationOptions {
  std::uint64_t per_level_budget = 20000;
  /// Steps of the final full-ladder run; 0 means per_level_budget * T.
  std::uint64_t verification_steps = 0;
  double burn_in_fraction = 0.1;
  double occupancy_factor = 3.0;
};

struct CalibrationReport {
  std::vector<double> zeta;
  std::vector<double> occupancy;  ///< from the verification run
  std::vector<RatioEstimate> ratio_estimates;  ///< one per adjacent pair
  std::vector<std::uint64_t> budget_used;      ///< per stage, then the verification run
  bool success = true;
  std::vector<int> offending_levels;
};

/// Grows the active prefix one level at a time: run the restricted chain,
/// estimate the next ratio from the current top level, set
/// zeta_{k+1} = zeta_k - log(ratio). A final full-ladder run checks that
/// every level's occupancy is within `occupancy_factor` of 1/T.
CalibrationReport calibrate_pseudo_weights(const MixtureSpec& spec, const Ladder& ladder,
                                           const TemperingConfig& config, const CalibrationOptions& options);

}  // namespace stemper
