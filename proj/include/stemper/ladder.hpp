#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stemper/common.hpp"
#include "stemper/targets.hpp"

namespace stemper {

class Rng;

/// Increasing inverse temperatures beta_1 < ... < beta_T = 1 together with
/// pseudo-log-weights zeta_i = log(r_i / Z_i) (up to a shared constant).
class Ladder {
 public:
  explicit Ladder(std::vector<double> betas, std::vector<double> log_weights = {});

  static Ladder single_level() { return Ladder({1.0}); }

  int size() const { return static_cast<int>(betas_.size()); }
  double beta(int level) const { return betas_.at(static_cast<std::size_t>(level)); }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& log_weights() const { return log_weights_; }
  void set_log_weights(std::vector<double> log_weights);

  /// max_i beta_{i+1} / beta_i; 1 for a single level.
  double max_ratio() const;
  /// Spacing ratio requested at construction by build_ladder (0 if explicit).
  double spacing_ratio() const { return spacing_ratio_; }
  /// Levels prepended by build_ladder to push beta_1 below 1 / (4 L D^2).
  int extended_levels() const { return extended_levels_; }
  /// Level count produced by the closed-form T before any extension.
  int formula_levels() const { return formula_levels_; }

  /// r_i ∝ exp(zeta_i), normalized; treats the pseudo-weights as exact.
  std::vector<double> level_weights() const;

 private:
  friend Ladder build_ladder(double, double, int, double);

  std::vector<double> betas_;
  std::vector<double> log_weights_;
  double spacing_ratio_ = 0.0;
  int extended_levels_ = 0;
  int formula_levels_ = 0;
};

/// Geometric ladder with ratio 1 + 1/(kappa sqrt d) and
/// T = ceil((kappa sqrt d + 1) log(4 L D^2 + 1)), extended downward at the
/// same ratio until beta_1 <= 1/(4 L D^2). D = 0 gives the single level 1.
Ladder build_ladder(double smoothness, double convexity, int dim, double max_displacement);

struct OverlapDiagnostics {
  double hellinger_floor = 1.0;  ///< exp(-beta_1 L D^2 / 2)
  double kl_ceiling = 0.0;       ///< (d kappa^2 / 4)(max ratio - 1)^2
  double overlap_margin = 1.0;   ///< min{1 - sqrt(kl_ceiling), floor^2}
  double ceiling_margin = 1.0;   ///< 1 - sqrt(kl_ceiling) alone
  /// Margin asserted under beta_1 <= 1/(4LD^2) and the spacing condition;
  /// reported beside the computed value, which can be as low as 1/2 there.
  double claimed_margin = 0.75;
};

OverlapDiagnostics overlap_diagnostics(const MixtureSpec& spec, const Ladder& ladder);

struct StepSizes {
  double rwm_h = 0.0;
  double mala_h = 0.0;
  double tau = 0.0;      ///< alpha (1 - alpha) q_adj r_tilde
  double radius = 0.0;   ///< R_{eta, eps}
  double r_tilde = 0.0;  ///< min_{i,i'} r_i' / r_i
  double r_min = 0.0;
};

/// Step sizes and complexity factors for a ladder. `c` must lie in (0, 0.01].
StepSizes step_sizes(const MixtureSpec& spec, const Ladder& ladder, double alpha, double q_adj,
                     double eta, double epsilon, double c);

struct DesignReport {
  int levels = 0;
  double beta1 = 0.0;
  double ratio = 0.0;
  OverlapDiagnostics overlap;
  StepSizes steps;
};

DesignReport design_report(const MixtureSpec& spec, const Ladder& ladder, double alpha, double q_adj,
                           double eta, double epsilon, double c);

/// CSV summary: T, beta1, ratio, hellinger_floor, kl_ceiling,
/// overlap_margin, rwm_h, mala_h, tau, R.
std::string design_csv_header();
std::string design_csv_row(const DesignReport& report);

/// F(rho) = (2 sqrt(1 + rho) / (2 + rho))^{d/2}.
double overlap_factor(double rho, int dim);

struct GaussianOverlap {
  double hellinger = 1.0;
  double kl = 0.0;
  double kl_error = 0.0;  ///< quadrature error estimate of the temperature part
};

/// Hellinger affinity and KL(p_beta || p_beta2) between the Gaussians
/// exp(-beta |x - mu|_A^2 / 2) and exp(-beta2 |x - mu2|_A^2 / 2); the
/// temperature part of the KL is integrated numerically,
/// KL = int_beta^beta2 (beta2 - z) v(z) dz with v(z) = d / (2 z^2).
GaussianOverlap gaussian_closed_forms(double beta, double beta2, const Vector& mu, const Vector& mu2);
GaussianOverlap gaussian_closed_forms(double beta, double beta2, const Vector& mu, const Vector& mu2,
                                      const Vector& curvature);

/// KL between the tempered local densities at beta and beta2 (same mode).
/// Quadratics use the exact variance of f; other potentials need an `rng`
/// and use a self-normalized importance-sampling plug-in for v(z).
/// `split_points` subdivides the integration range.
double kl_between_levels(const LocalPotential& local, double beta, double beta2,
                         std::span<const double> split_points = {}, Rng* rng = nullptr,
                         int mc_draws = 100000);

}  // namespace stemper
