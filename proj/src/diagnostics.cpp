#include "stemper/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "stemper/errors.hpp"
#include "stemper/finitelab.hpp"
#include "stemper/stats.hpp"

namespace stemper {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vector draw_component(const MixtureSpec& spec, int label, double beta, Rng& rng) {
  const Vector& a = spec.local().curvature();
  return spec.mode(label) + (rng.normal_vector(spec.dimension()).array() / (beta * a.array()).sqrt()).matrix();
}

double mixture_hellinger_min(const MixtureSpec& spec, double beta) {
  double h = 1.0;
  const Vector& a = spec.local().curvature();
  for (int j = 0; j < spec.components(); ++j) {
    for (int k = j + 1; k < spec.components(); ++k) {
      h = std::min(h, gaussian_closed_forms(beta, beta, spec.mode(j), spec.mode(k), a).hellinger);
    }
  }
  return h;
}

// Delta = max_i KL(Pi_ij || Pi_i+1,j) / 2; the location terms vanish.
double level_delta(const MixtureSpec& spec, const Ladder& ladder) {
  double kl = 0.0;
  const Vector& a = spec.local().curvature();
  for (int i = 0; i + 1 < ladder.size(); ++i) {
    kl = std::max(kl, gaussian_closed_forms(ladder.beta(i), ladder.beta(i + 1), spec.mode(0), spec.mode(0), a).kl);
  }
  return 0.5 * kl;
}

void fill_diagonal(Matrix& P) {
  for (int a = 0; a < P.rows(); ++a) {
    double off = 0.0;
    for (int b = 0; b < P.cols(); ++b) off += a == b ? 0.0 : P(a, b);
    P(a, a) = std::max(0.0, 1.0 - off);
  }
}

double symmetric_gap(const Matrix& P, const Vector& stationary) {
  return spectral_gap(make_chain(symmetrize_flux(P, stationary), stationary));
}

// Tightest record per name, with the number of violations in the note.
BoundReport condense(const BoundReport& full) {
  BoundReport out;
  out.name = full.name;
  std::map<std::string, std::size_t> fails;
  for (const auto& r : full.records) fails[r.name] += r.verdict == Verdict::Fail;
  for (auto r : full.tightest()) {
    const auto k = fails[r.name];
    if (k > 0) r.note = std::to_string(k) + " violations" + (r.note.empty() ? "" : "; " + r.note);
    out.add(std::move(r));
  }
  return out;
}

double positive_uniform(Rng& rng) { return 1.0 - rng.uniform(); }

}  // namespace

Matrix symmetrize_flux(const Matrix& P, const Vector& stationary) {
  const Matrix F = stationary.asDiagonal() * P;
  Matrix S = 0.5 * (F + F.transpose());
  Matrix out = stationary.cwiseInverse().asDiagonal() * S;
  fill_diagonal(out);
  return out;
}

double canonical_path_bound(const Matrix& P, std::span<const double> r, std::span<const double> w) {
  const int T = static_cast<int>(r.size());
  const int K = static_cast<int>(w.size());
  if (P.rows() != T * K || P.cols() != T * K) throw InvalidArgument("matrix is not on the [T] x [K] grid");
  const double r_min = *std::min_element(r.begin(), r.end());
  double lam1 = kInf, lam2 = kInf;
  for (int i = 0; i + 1 < T; ++i) {
    for (int j = 0; j < K; ++j) lam1 = std::min(lam1, r[static_cast<std::size_t>(i)] * P(i * K + j, (i + 1) * K + j));
  }
  for (int j = 0; j < K; ++j) {
    for (int k = 0; k < K; ++k) {
      if (j != k) lam2 = std::min(lam2, r_min / w[static_cast<std::size_t>(k)] * P(j, k));
    }
  }
  return std::min(lam1, lam2) / (2.0 * T);
}

ProjectedEstimate projected_chain_estimate(const MixtureSpec& spec, const Ladder& ladder, const TemperingConfig& config,
                                           Rng& rng, const ProjectedOptions& options) {
  if (!spec.local().is_quadratic()) throw Unsupported("projected chain estimate needs exact component sampling");
  if (options.n_mc < 10000) throw InvalidArgument("n_mc must be at least 1e4 per entry");
  if (options.batches < 2 || options.bootstrap < 1) throw InvalidArgument("need >= 2 batches and >= 1 bootstrap draw");
  config.validate(ladder);

  const int T = ladder.size(), K = spec.components(), N = T * K;
  const auto r = ladder.level_weights();
  const auto& w = spec.weights();
  const auto B = static_cast<std::size_t>(options.batches);
  const std::size_t per = (options.n_mc + B - 1) / B;
  const std::size_t n = per * B;
  const double move = 0.5 * config.alpha * config.q_adj;

  ProjectedEstimate est;
  est.levels = T;
  est.labels = K;
  est.n_mc = n;
  est.stationary.resize(N);
  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < K; ++j) est.stationary(i * K + j) = r[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(j)];
  }
  est.stationary /= est.stationary.sum();

  std::vector<Matrix> batch(B, Matrix::Zero(N, N));
  Matrix sum_sq = Matrix::Zero(N, N);
  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < K; ++j) {
      const int row = i * K + j;
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t k = 0; k < per; ++k) {
          const Vector x = draw_component(spec, j, ladder.beta(i), rng);
          const double here = std::log(r[static_cast<std::size_t>(i)]) +
                              component_log_density(spec, ladder, i, j, x, true).value;
          auto add = [&](int col, double v) {
            batch[b](row, col) += v;
            sum_sq(row, col) += v * v;
          };
          for (int to : {i - 1, i + 1}) {
            if (to < 0 || to >= T) continue;
            const double there = std::log(r[static_cast<std::size_t>(to)]) +
                                 component_log_density(spec, ladder, to, j, x, true).value;
            add(to * K + j, move * std::min(1.0, std::exp(there - here)));
          }
          if (K > 1) {
            const auto cw = conditional_label_weights(spec, ladder, i, x);
            for (int jj = 0; jj < K; ++jj) {
              if (jj != j) add(i * K + jj, 0.5 * cw[static_cast<std::size_t>(jj)]);
            }
          }
        }
      }
    }
  }

  est.matrix = Matrix::Zero(N, N);
  for (auto& m : batch) {
    est.matrix += m;
    m /= static_cast<double>(per);
  }
  est.matrix /= static_cast<double>(n);
  est.std_error = Matrix::Zero(N, N);
  for (int a = 0; a < N; ++a) {
    for (int c = 0; c < N; ++c) {
      if (a == c) continue;
      const double mu = est.matrix(a, c);
      const double var = std::max(0.0, (sum_sq(a, c) - n * mu * mu) / (n - 1.0));
      est.std_error(a, c) = std::sqrt(var / n);
    }
  }
  fill_diagonal(est.matrix);
  est.symmetrized = symmetrize_flux(est.matrix, est.stationary);
  est.gap = spectral_gap(make_chain(est.symmetrized, est.stationary));

  std::vector<double> boot;
  boot.reserve(static_cast<std::size_t>(options.bootstrap));
  for (int rep = 0; rep < options.bootstrap; ++rep) {
    Matrix m = Matrix::Zero(N, N);
    for (std::size_t b = 0; b < B; ++b) m += batch[static_cast<std::size_t>(rng.index(static_cast<int>(B)))];
    m /= static_cast<double>(B);
    fill_diagonal(m);
    boot.push_back(symmetric_gap(m, est.stationary));
  }
  est.gap_lower = stats::quantile(boot, 0.01);

  std::vector<double> rs(est.levels);
  for (int i = 0; i < T; ++i) rs[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(i)];
  est.canonical = canonical_path_bound(est.symmetrized, rs, w);
  est.r_min = *std::min_element(r.begin(), r.end());
  est.r_tilde = est.r_min / *std::max_element(r.begin(), r.end());
  est.hellinger = mixture_hellinger_min(spec, ladder.beta(0));
  est.delta = level_delta(spec, ladder);
  est.bound = config.alpha * est.r_tilde * est.r_min * config.q_adj / (4.0 * T) *
              std::min(1.0 - std::sqrt(est.delta), est.hellinger * est.hellinger);

  auto& rep = est.report;
  rep.name = "projected-chain";
  auto lower = check_leq("projected-gap-lower-bound", est.bound, est.gap_lower);
  lower.samples = static_cast<std::size_t>(options.bootstrap);
  lower.note = "rhs is the 1% bootstrap quantile; point estimate " + std::to_string(est.gap);
  rep.add(lower);
  rep.add(check_leq("canonical-path", est.canonical, est.gap));
  const Vector& a = spec.local().curvature();
  for (int j = 0; j < K; ++j) {
    for (int k = 0; k < K; ++k) {
      if (j == k) continue;
      const double H = gaussian_closed_forms(ladder.beta(0), ladder.beta(0), spec.mode(j), spec.mode(k), a).hellinger;
      auto rec = check_leq("label-entry-floor", 0.5 * w[static_cast<std::size_t>(k)] * H * H - 3.0 * est.std_error(j, k),
                           est.matrix(j, k));
      rec.samples = n;
      rep.add(rec);
    }
  }
  for (int row = 0; row < N; ++row) {
    double off = 0.0;
    for (int c = 0; c < N; ++c) off += c == row ? 0.0 : est.matrix(row, c);
    rep.add(check_leq("row-mass", off, 1.0));
  }
  est.report = condense(rep);
  return est;
}

BoundReport swap_acceptance_check(std::span<const TraceRecord> trace, const MixtureSpec& spec, const Ladder& ladder) {
  if (!spec.local().is_quadratic()) throw Unsupported("swap acceptance check uses closed-form Gaussian KL");
  const int T = ladder.size();
  BoundReport rep;
  rep.name = "swap-acceptance";
  if (T < 2) return rep;

  std::vector<double> occ(static_cast<std::size_t>(T), 0.0);
  std::vector<std::vector<double>> outcomes(static_cast<std::size_t>(T - 1));
  for (const auto& rec : trace) {
    occ[static_cast<std::size_t>(rec.level)] += 1.0;
    if (rec.move != MoveType::SwapUp && rec.move != MoveType::SwapDown) continue;
    int from = rec.level;
    if (rec.accepted) from += rec.move == MoveType::SwapUp ? -1 : 1;
    const int pair = rec.move == MoveType::SwapUp ? from : from - 1;
    outcomes[static_cast<std::size_t>(pair)].push_back(rec.accepted ? 1.0 : 0.0);
  }
  const auto [lo, hi] = std::minmax_element(occ.begin(), occ.end());
  const double r_tilde = *hi > 0.0 ? *lo / *hi : 0.0;
  const double floor = r_tilde * (1.0 - std::sqrt(level_delta(spec, ladder)));

  for (int p = 0; p + 1 < T; ++p) {
    const auto& seq = outcomes[static_cast<std::size_t>(p)];
    if (seq.size() < 2) {
      InequalityRecord skip;
      skip.name = "swap-acceptance";
      skip.verdict = Verdict::Skipped;
      skip.note = "pair " + std::to_string(p) + " has fewer than two attempts";
      rep.add(skip);
      continue;
    }
    const double rate = stats::mean(seq);
    const double tau = stats::integrated_autocorrelation_time(seq);
    const double se = std::sqrt(rate * (1.0 - rate) * tau / static_cast<double>(seq.size()));
    auto rec = check_leq("swap-acceptance", floor - 3.0 * se, rate);
    rec.samples = seq.size();
    rec.note = "pair " + std::to_string(p) + ", r~=" + std::to_string(r_tilde);
    rep.add(rec);
  }
  return rep;
}

BoundReport inequality_suite(const MixtureSpec& spec, const Ladder& ladder, Rng& rng, const InequalityOptions& options) {
  if (options.n_points < 1000) throw InvalidArgument("inequality suite needs at least 1e3 points");
  const auto& f = spec.local();
  const double L = f.smoothness();
  const double D = spec.max_displacement();
  const double scale = 3.0 * (D + 1.0 / std::sqrt(f.convexity()));
  const int d = spec.dimension();

  BoundReport full;
  full.name = "inequality-suite";
  for (std::size_t p = 0; p < options.n_points; ++p) {
    const double beta = ladder.beta(rng.index(ladder.size()));
    const int j = rng.index(spec.components());
    const Vector x = scale * rng.normal_vector(d);
    const Vector y = scale * rng.normal_vector(d);
    const Vector z = scale * rng.normal_vector(d);
    const double sb = std::sqrt(beta);
    const double reach = sb * x.norm() + D;

    const auto ux = mixture_potential_and_gradient(spec, x);
    const auto uy = mixture_potential_and_gradient(spec, y);
    full.add(check_leq("U-gradient-gap", (ux.gradient - f.gradient(x)).norm(), L * D));
    full.add(check_leq("U-smoothness", uy.value - ux.value - ux.gradient.dot(y - x), 0.5 * L * (y - x).squaredNorm()));
    full.add(check_leq("grad-f-bound", sb * f.gradient(x - spec.mode(j)).norm(), L * reach));
    full.add(check_leq("grad-U-bound", sb * ux.gradient.norm(), L * reach));

    {
      const double h = std::exp(std::log(1e-4) + rng.uniform() * std::log(1e5)) / L;
      const Vector yz = x - h * ux.gradient + std::sqrt(2.0 * h / beta) * z;
      full.add(check_leq("grad-U-proposal-bound", sb * mixture_gradient(spec, yz).norm(),
                         std::sqrt(2.0 * h) * L * z.norm() + (1.0 + h * L) * L * reach));
    }
    {
      const double h = positive_uniform(rng) / L;
      const Vector mx = x - h * f.gradient(x), my = y - h * f.gradient(y);
      full.add(check_leq("mala-mean-contraction", (mx - my).norm(), (x - y).norm()));
    }
    {
      // h satisfying the step-size condition with c_h in (0, 1].
      const double ch = positive_uniform(rng);
      const double h = ch * positive_uniform(rng) / (L * L * reach * reach);
      const double hl = h * L, zn = z.norm();
      const Vector yz = x - h * ux.gradient + std::sqrt(2.0 * h / beta) * z;
      const double df = beta * (f.value(x - spec.mode(j)) - f.value(yz - spec.mode(j)));
      full.add(check_leq("acc-mala-density", -df,
                         hl * zn * zn + (1.0 + hl) * std::sqrt(2.0 * ch) * zn + (1.0 + hl / 2.0) * std::sqrt(ch)));
      const Vector gy = mixture_gradient(spec, yz);
      const double fwd = (yz - x + h * ux.gradient).squaredNorm();
      const double bwd = (x - yz + h * gy).squaredNorm();
      const double log_ratio = -beta / (4.0 * h) * (bwd - fwd);
      full.add(check_leq("acc-mala-proposal", -log_ratio,
                         hl * (1.0 + hl / 2.0) * zn * zn + (2.0 + 3.0 * hl + hl * hl) * std::sqrt(ch / 2.0) * zn +
                             (1.0 + hl / 2.0) * (1.0 + hl / 2.0) * ch));
    }
  }
  return condense(full);
}

double hot_level_flow_bound(int dim, double D, double beta1, double h, double s) {
  if (!(h > 0.0)) throw InvalidArgument("h must be positive");
  if (!(s >= 0.0 && s < 0.5)) throw InvalidArgument("s must lie in [0, 1/2)");
  return 4.0 / (1.0 - 2.0 * s) * std::exp(0.5 * dim * std::log(2.0 / (2.0 + h)) - beta1 * D * D / (2.0 + h));
}

double ladder_ratio_bound(const Ladder& ladder, int dim) {
  double best = 1.0;
  for (int i = 0; i + 1 < ladder.size(); ++i) {
    best = std::min(best, overlap_factor(ladder.beta(i + 1) / ladder.beta(i) - 1.0, dim));
  }
  return 16.0 * best;
}

CounterexampleReport counterexample_witness(const MixtureSpec& spec, const Ladder& ladder, double h, double s,
                                            std::size_t n_mc, Rng& rng) {
  const int d = spec.dimension();
  const auto& f = spec.local();
  bool ok = spec.components() == 2 && f.is_quadratic() && std::abs(spec.weights()[0] - 0.5) < 1e-12;
  if (ok) ok = (f.curvature().array() == 1.0).all();
  const double D = spec.max_displacement();
  if (ok) {
    Vector e = Vector::Zero(d);
    e(0) = D;
    ok = D > 0.0 && ((spec.mode(0) - e).norm() == 0.0 || (spec.mode(0) + e).norm() == 0.0) &&
         (spec.mode(0) + spec.mode(1)).norm() == 0.0;
  }
  if (!ok) throw InvalidArgument("witness needs the equal-weight two-Gaussian with modes +-(D, 0, ..., 0)");
  if (n_mc < 2) throw InvalidArgument("n_mc must be at least 2");

  CounterexampleReport out;
  const int T = ladder.size();
  const double beta1 = ladder.beta(0);
  out.flow_bound = hot_level_flow_bound(d, D, beta1, h, s);
  out.numerator = 2.0 * std::exp(0.5 * d * std::log(2.0 / (2.0 + h)) - beta1 * D * D / (2.0 + h));
  out.ratio_bound = s < 1.0 / (4.0 * T) ? ladder_ratio_bound(ladder, d) : std::numeric_limits<double>::quiet_NaN();
  auto& rep = out.report;
  rep.name = "counterexample";

  // Mixture flow int_{x1>0} int_{y1<0} q_i min(pi_i(x), pi_i(y)) per level,
  // stratified by component; the tempered target sits within a factor
  // 1/w_min of the tempered mixture.
  const double w_min = spec.min_weight();
  const std::size_t per = std::max<std::size_t>(n_mc / 2, 2);
  double flow = 0.0, flow_var = 0.0;
  for (int i = 0; i < T; ++i) {
    const double beta = ladder.beta(i);
    auto log_mix = [&](const Vector& v) {
      const double a = -0.5 * beta * (v - spec.mode(0)).squaredNorm();
      const double b = -0.5 * beta * (v - spec.mode(1)).squaredNorm();
      const double m = std::max(a, b);
      return m + std::log(std::exp(a - m) + std::exp(b - m));
    };
    double level_flow = 0.0, level_var = 0.0;
    for (int j = 0; j < 2; ++j) {
      std::vector<double> g(per);
      for (std::size_t k = 0; k < per; ++k) {
        const Vector x = draw_component(spec, j, beta, rng);
        const Vector y = x + std::sqrt(2.0 * h / beta) * rng.normal_vector(d);
        g[k] = x(0) > 0.0 && y(0) < 0.0 ? std::min(1.0, std::exp(log_mix(y) - log_mix(x))) : 0.0;
      }
      level_flow += 0.5 * stats::mean(g);
      level_var += 0.25 * stats::variance(g) / static_cast<double>(per);
    }
    const double level_se = std::sqrt(level_var) / w_min;
    const double level_bound = 2.0 * std::exp(0.5 * d * std::log(2.0 / (2.0 + h)) - beta * D * D / (2.0 + h));
    auto rec = check_leq("level-flow", level_flow / w_min - 3.0 * level_se, level_bound);
    rec.samples = 2 * per;
    rec.note = "level " + std::to_string(i);
    rep.add(rec);
    flow += level_flow / T;
    flow_var += level_var / (static_cast<double>(T) * T);
  }
  out.flow_lower = w_min * flow;
  out.flow_upper = flow / w_min;
  out.flow_se = std::sqrt(flow_var) / w_min;
  auto rec = check_leq("half-space-flow", out.flow_upper - 3.0 * out.flow_se, out.numerator);
  rec.samples = 2 * per * static_cast<std::size_t>(T);
  rec.note = "sandwich [" + std::to_string(out.flow_lower) + ", " + std::to_string(out.flow_upper) + "]";
  rep.add(rec);

  for (int i = 0; i + 1 < T; ++i) {
    const double rho = ladder.beta(i + 1) / ladder.beta(i) - 1.0;
    if (rho <= 0.5) rep.add(check_leq("F-envelope", overlap_factor(rho, d), std::exp(-rho * rho * d / 48.0)));
  }
  out.report = condense(rep);
  return out;
}

double mixture_marginal_cdf(const MixtureSpec& spec, int k, double t) {
  if (!spec.local().is_quadratic()) throw Unsupported("closed-form marginals need a quadratic potential");
  const double sd = 1.0 / std::sqrt(spec.local().curvature()(k));
  double acc = 0.0;
  for (int j = 0; j < spec.components(); ++j) {
    acc += spec.weights()[static_cast<std::size_t>(j)] * stats::normal_cdf((t - spec.mode(j)(k)) / sd);
  }
  return acc;
}

MarginalFit marginal_fit(std::span<const Vector> samples, const MixtureSpec& spec, const Ladder& ladder, int level,
                         const MarginalOptions& options) {
  if (level != ladder.size() - 1) throw Unsupported("only the cold level has a closed-form marginal");
  if (!spec.local().is_quadratic()) throw Unsupported("closed-form marginals need a quadratic potential");
  if (samples.empty()) throw InsufficientSamples(0, options.min_effective);

  MarginalFit fit;
  fit.report.name = "marginal-fit";
  const int d = spec.dimension();
  fit.ks_passed = true;
  for (int k = 0; k < d; ++k) {
    std::vector<double> series(samples.size());
    for (std::size_t t = 0; t < samples.size(); ++t) series[t] = samples[t](k);
    const double tau = stats::integrated_autocorrelation_time(series);
    const auto stride = static_cast<std::size_t>(std::ceil(tau));
    std::vector<double> kept;
    for (std::size_t t = 0; t < series.size(); t += stride) kept.push_back(series[t]);
    const double stat = stats::ks_statistic(kept, [&](double v) { return mixture_marginal_cdf(spec, k, v); });
    const double p = stats::ks_p_value(stat, kept.size());
    fit.ks_statistic.push_back(stat);
    fit.p_value.push_back(p);
    fit.iat.push_back(tau);
    fit.effective.push_back(kept.size());

    auto rec = check_leq("ks-p-value", options.alpha, p, true, 0.0);
    rec.samples = kept.size();
    rec.note = "coordinate " + std::to_string(k) + ", KS " + std::to_string(stat) + ", IAT " + std::to_string(tau);
    if (kept.size() < options.min_effective) {
      rec.verdict = Verdict::Fail;
      rec.note += ", only " + std::to_string(kept.size()) + " effective samples";
    }
    fit.ks_passed = fit.ks_passed && rec.verdict == Verdict::Pass;
    fit.report.add(rec);
  }

  fit.occupancy.assign(static_cast<std::size_t>(spec.components()), 0.0);
  for (const auto& x : samples) fit.occupancy[static_cast<std::size_t>(nearest_mode(spec, x))] += 1.0;
  double worst = 0.0;
  for (int j = 0; j < spec.components(); ++j) {
    auto& o = fit.occupancy[static_cast<std::size_t>(j)];
    o /= static_cast<double>(samples.size());
    worst = std::max(worst, std::abs(o - spec.weights()[static_cast<std::size_t>(j)]));
  }
  auto occ = check_leq("mode-occupancy", worst, options.occupancy_tolerance, true, 0.0);
  occ.samples = samples.size();
  occ.note = "max |occupancy - w|";
  fit.occupancy_passed = occ.verdict == Verdict::Pass;
  fit.report.add(occ);
  return fit;
}

}  // namespace stemper
