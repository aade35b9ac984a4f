#include "stemper/zconst.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stemper/errors.hpp"
#include "stemper/stats.hpp"

namespace stemper {

RatioEstimate estimate_level_ratio_from_potentials(std::span<const double> potentials, double beta,
                                                   double beta_next, double correlation_time) {
  const std::size_t n = potentials.size();
  if (n < kMinRatioSamples) throw InsufficientSamples(n, kMinRatioSamples);
  if (!(beta > 0.0) || !(beta_next >= beta)) throw InvalidArgument("need 0 < beta <= beta_next");
  if (!(correlation_time >= 1.0)) throw InvalidArgument("correlation time must be >= 1");

  RatioEstimate est;
  est.samples = n;
  if (beta_next == beta) return est;

  const double db = beta_next - beta;
  std::vector<double> a(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::isfinite(potentials[k])) throw NonFiniteInput("non-finite potential in ratio samples");
    a[k] = -db * potentials[k];
  }
  const double shift = *std::max_element(a.begin(), a.end());
  std::vector<double> e(n);
  for (std::size_t k = 0; k < n; ++k) e[k] = std::exp(a[k] - shift);
  const double total = stats::pairwise_sum(e);
  const double dn = static_cast<double>(n);
  est.log_ratio = shift + std::log(total) - std::log(dn);
  est.ratio = std::exp(est.log_ratio);

  // Leave-one-out means, relative to the full estimate.
  std::vector<double> loo_log(n), loo_rel(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double rest = std::max(total - e[k], std::numeric_limits<double>::min());
    loo_log[k] = shift + std::log(rest) - std::log(dn - 1.0);
    loo_rel[k] = std::exp(loo_log[k] - est.log_ratio);
  }
  auto jackknife_se = [&](const std::vector<double>& v) {
    const double m = stats::mean(v);
    std::vector<double> sq(n);
    for (std::size_t k = 0; k < n; ++k) sq[k] = (v[k] - m) * (v[k] - m);
    return std::sqrt((dn - 1.0) / dn * stats::pairwise_sum(sq));
  };
  const double inflate = std::sqrt(correlation_time);
  est.log_std_error = inflate * jackknife_se(loo_log);
  est.std_error = inflate * est.ratio * jackknife_se(loo_rel);
  return est;
}

RatioEstimate estimate_level_ratio(std::span<const Vector> samples, const MixtureSpec& spec, double beta,
                                   double beta_next, double correlation_time) {
  if (samples.size() < kMinRatioSamples) throw InsufficientSamples(samples.size(), kMinRatioSamples);
  std::vector<double> u;
  u.reserve(samples.size());
  for (const auto& x : samples) u.push_back(mixture_potential(spec, x));
  return estimate_level_ratio_from_potentials(u, beta, beta_next, correlation_time);
}

CalibrationReport calibrate_pseudo_weights(const MixtureSpec& spec, const Ladder& ladder,
                                           const TemperingConfig& config, const CalibrationOptions& options) {
  if (options.per_level_budget < 10000) throw InvalidArgument("per-level budget must be >= 1e4");
  if (!(options.burn_in_fraction >= 0.0 && options.burn_in_fraction < 1.0)) {
    throw InvalidArgument("burn-in fraction must lie in [0, 1)");
  }
  config.validate(ladder);
  const int T = ladder.size();
  CalibrationReport rep;
  rep.zeta.assign(static_cast<std::size_t>(T), 0.0);
  if (T == 1) {
    rep.occupancy = {1.0};
    rep.budget_used = {0};
    return rep;
  }

  Rng init_rng(config.seed, config.stream + 0x5eed);
  TemperingState state = default_initial_state(spec, ladder, init_rng);

  for (int k = 1; k < T; ++k) {
    // Active prefix is levels [0, k); its top level k-1 feeds the ratio.
    Ladder prefix(ladder.betas(), rep.zeta);
    TemperingConfig stage = config;
    stage.active_levels = k;
    stage.stream = config.stream + static_cast<std::uint64_t>(k);
    if (state.level >= k) state.level = k - 1;

    const std::uint64_t steps = options.per_level_budget * static_cast<std::uint64_t>(k);
    const auto burn = static_cast<std::uint64_t>(options.burn_in_fraction * static_cast<double>(steps));
    std::vector<double> top_potentials;
    std::uint64_t t = 0;
    RunOptions run{.n_steps = steps, .keep_trace = false};
    run.observer = [&](const TemperingState& s, const TraceRecord&) {
      if (++t > burn && s.level == k - 1) top_potentials.push_back(mixture_potential(spec, s.x));
    };
    const auto out = run_chain(state, spec, prefix, stage, run);
    state = out.final_state;
    rep.budget_used.push_back(steps);

    const double beta = ladder.beta(k - 1), beta_next = ladder.beta(k);
    std::vector<double> weights(top_potentials.size());
    for (std::size_t n = 0; n < weights.size(); ++n) weights[n] = -(beta_next - beta) * top_potentials[n];
    const double tau = stats::integrated_autocorrelation_time(weights);
    const auto est = estimate_level_ratio_from_potentials(top_potentials, beta, beta_next, tau);
    rep.ratio_estimates.push_back(est);
    rep.zeta[static_cast<std::size_t>(k)] = rep.zeta[static_cast<std::size_t>(k - 1)] - est.log_ratio;
  }

  const Ladder final_ladder(ladder.betas(), rep.zeta);
  TemperingConfig verify = config;
  verify.active_levels.reset();
  verify.stream = config.stream + static_cast<std::uint64_t>(T);
  const std::uint64_t vsteps =
      options.verification_steps ? options.verification_steps : options.per_level_budget * static_cast<std::uint64_t>(T);
  const auto check = run_chain(state, spec, final_ladder, verify, {.n_steps = vsteps, .keep_trace = false});
  rep.budget_used.push_back(vsteps);
  rep.occupancy = check.summary.occupancy;

  const double uniform = 1.0 / T;
  for (int i = 0; i < T; ++i) {
    const double occ = rep.occupancy[static_cast<std::size_t>(i)];
    if (occ < uniform / options.occupancy_factor || occ > uniform * options.occupancy_factor) {
      rep.offending_levels.push_back(i);
    }
  }
  rep.success = rep.offending_levels.empty();
  return rep;
}

}  // namespace stemper
