#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stemper/common.hpp"
#include "stemper/ladder.hpp"
#include "stemper/report.hpp"
#include "stemper/rng.hpp"
#include "stemper/targets.hpp"
#include "stemper/tempering.hpp"

namespace stemper {

/// Monte Carlo estimate of the block chain on [T] x [K] induced by the
/// auxiliary label-augmented chain. State (i, j) has index i * K + j.
struct ProjectedEstimate {
  int levels = 0;
  int labels = 0;
  Matrix matrix;      ///< raw estimate, diagonal = 1 - off-diagonal row sum
  Matrix std_error;   ///< per-entry standard error (0 on the diagonal)
  Vector stationary;  ///< r_i w_j
  Matrix symmetrized; ///< flux-symmetrized, exactly reversible w.r.t. stationary
  double gap = 0.0;        ///< spectral gap of `symmetrized`
  double gap_lower = 0.0;  ///< 1% batch-bootstrap quantile of the gap
  double canonical = 0.0;  ///< canonical path bound evaluated on `symmetrized`
  double bound = 0.0;      ///< (alpha r~ r_min q_adj / 4T) min{1 - sqrt(Delta), H^2}
  double hellinger = 1.0;  ///< H: min affinity between level-1 components
  double delta = 0.0;      ///< max_i KL(Pi_ij || Pi_i+1,j) / 2
  double r_tilde = 1.0;
  double r_min = 1.0;
  std::size_t n_mc = 0;
  BoundReport report;
};

struct ProjectedOptions {
  std::size_t n_mc = 10000;  ///< draws per (i, j) row
  int batches = 20;
  int bootstrap = 400;
};

/// Needs a quadratic local potential (exact component sampling). Level
/// weights r come from the ladder's pseudo-log-weights.
ProjectedEstimate projected_chain_estimate(const MixtureSpec& spec, const Ladder& ladder,
                                           const TemperingConfig& config, Rng& rng,
                                           const ProjectedOptions& options = {});

/// Flux symmetrization (F + F^T) / 2 of an estimated chain with known
/// stationary vector; the diagonal absorbs the remainder.
Matrix symmetrize_flux(const Matrix& P, const Vector& stationary);

/// (1 / 2T) min{Lambda_1, Lambda_2} for a chain on the [T] x [K] grid with
/// stationary r_i w_j. Lambda_1 uses upward level edges at every label,
/// Lambda_2 the label edges at the hottest level; an empty minimum is +inf.
double canonical_path_bound(const Matrix& P, std::span<const double> r, std::span<const double> w);

/// Empirical adjacent-swap acceptance from a trace against
/// r~ (1 - sqrt(Delta)) - 3 SE. r~ is taken from the observed level
/// occupancy, SEs from autocorrelation-inflated Bernoulli variance.
BoundReport swap_acceptance_check(std::span<const TraceRecord> trace, const MixtureSpec& spec,
                                  const Ladder& ladder);

struct InequalityOptions {
  std::size_t n_points = 1000;
};

/// Randomized check of the gradient, smoothness, MALA mean contraction and
/// MALA acceptance lower bounds at points drawn with scale 3(D + 1/sqrt m).
/// The report keeps the tightest record per inequality.
BoundReport inequality_suite(const MixtureSpec& spec, const Ladder& ladder, Rng& rng,
                             const InequalityOptions& options = {});

/// Upper bound on Phi_s of the tempering chain for the symmetric
/// two-Gaussian target: (4 / (1 - 2s)) (2 / (2 + h))^{d/2} exp(-beta1 D^2 / (2 + h)).
double hot_level_flow_bound(int dim, double D, double beta1, double h, double s);

/// 16 min_i F(rho_i) with rho_i = beta_{i+1}/beta_i - 1; valid for s < 1/(4T).
double ladder_ratio_bound(const Ladder& ladder, int dim);

struct CounterexampleReport {
  double flow_bound = 0.0;   ///< hot_level_flow_bound
  double ratio_bound = 0.0;  ///< ladder_ratio_bound (NaN when s >= 1/(4T))
  double numerator = 0.0;    ///< 2 (2 / (2 + h))^{d/2} exp(-beta1 D^2 / (2 + h))
  double flow_lower = 0.0;   ///< w_min * mixture-flow estimate
  double flow_upper = 0.0;   ///< mixture-flow estimate / w_min
  double flow_se = 0.0;      ///< standard error of flow_upper
  BoundReport report;
};

/// Bounds and a Monte Carlo half-space flow estimate for the equal-weight
/// two-Gaussian target with modes +-(D, 0, ..., 0) and identity covariance.
/// Throws InvalidArgument for any other spec.
CounterexampleReport counterexample_witness(const MixtureSpec& spec, const Ladder& ladder, double h, double s,
                                            std::size_t n_mc, Rng& rng);

struct MarginalFit {
  std::vector<double> ks_statistic;  ///< per coordinate
  std::vector<double> p_value;
  std::vector<double> iat;
  std::vector<std::size_t> effective;  ///< samples kept after thinning
  std::vector<double> occupancy;       ///< nearest-mode fractions
  bool ks_passed = false;
  bool occupancy_passed = false;
  bool passed() const { return ks_passed && occupancy_passed; }
  BoundReport report;
};

struct MarginalOptions {
  double alpha = 0.01;
  double occupancy_tolerance = 0.05;
  std::size_t min_effective = 1000;
};

/// KS fit of cold-slice samples to the exact mixture marginals, after
/// thinning each coordinate by its integrated autocorrelation time, plus
/// nearest-mode occupancy against w. Only the cold level has a closed form:
/// any other `level` throws Unsupported, as does a non-quadratic potential.
MarginalFit marginal_fit(std::span<const Vector> samples, const MixtureSpec& spec, const Ladder& ladder,
                         int level, const MarginalOptions& options = {});

/// Exact CDF of coordinate k of the cold mixture (quadratic local potential).
double mixture_marginal_cdf(const MixtureSpec& spec, int coordinate, double t);

}  // namespace stemper
