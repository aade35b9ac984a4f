#include "stemper/ladder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "stemper/errors.hpp"
#include "stemper/rng.hpp"
#include "stemper/stats.hpp"

namespace stemper {

Ladder::Ladder(std::vector<double> betas, std::vector<double> log_weights)
    : betas_(std::move(betas)), log_weights_(std::move(log_weights)) {
  if (betas_.empty()) throw InvalidArgument("ladder needs at least one level");
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    if (!(betas_[i] > 0.0) || !(betas_[i] <= 1.0)) throw InvalidArgument("betas must lie in (0, 1]");
    if (i > 0 && !(betas_[i] > betas_[i - 1])) throw InvalidArgument("betas must be strictly increasing");
  }
  if (betas_.back() != 1.0) throw InvalidArgument("last beta must be exactly 1");
  if (log_weights_.empty()) log_weights_.assign(betas_.size(), 0.0);
  set_log_weights(log_weights_);
}

void Ladder::set_log_weights(std::vector<double> log_weights) {
  if (log_weights.size() != betas_.size()) throw InvalidArgument("one pseudo-log-weight per level required");
  for (double z : log_weights) {
    if (!std::isfinite(z)) throw NonFiniteInput("pseudo-log-weight is not finite");
  }
  log_weights_ = std::move(log_weights);
}

double Ladder::max_ratio() const {
  double r = 1.0;
  for (std::size_t i = 1; i < betas_.size(); ++i) r = std::max(r, betas_[i] / betas_[i - 1]);
  return r;
}

std::vector<double> Ladder::level_weights() const { return stats::softmax(log_weights_); }

Ladder build_ladder(double smoothness, double convexity, int dim, double max_displacement) {
  if (!(convexity > 0.0) || !(smoothness >= convexity) || !std::isfinite(smoothness)) {
    throw InvalidArgument("need L >= m > 0");
  }
  if (dim < 1) throw InvalidArgument("dimension must be >= 1");
  if (!(max_displacement >= 0.0) || !std::isfinite(max_displacement)) {
    throw InvalidArgument("D must be finite and nonnegative");
  }
  const double lds = smoothness * max_displacement * max_displacement;
  if (lds == 0.0) {
    Ladder single({1.0});
    single.formula_levels_ = 1;
    return single;
  }

  const double a = (smoothness / convexity) * std::sqrt(static_cast<double>(dim));
  const double ratio = 1.0 + 1.0 / a;
  const int formula_T = std::max(1, static_cast<int>(std::ceil((a + 1.0) * std::log(4.0 * lds + 1.0))));
  const double beta_cap = 1.0 / (4.0 * lds);

  // beta_i = ratio^{i-T}; extend downward until beta_1 <= 1/(4 L D^2).
  int T = formula_T;
  while (std::pow(ratio, -(T - 1)) > beta_cap) ++T;

  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i) betas[static_cast<std::size_t>(i)] = std::pow(ratio, i - (T - 1));
  betas.back() = 1.0;

  Ladder ladder(std::move(betas));
  ladder.spacing_ratio_ = ratio;
  ladder.formula_levels_ = formula_T;
  ladder.extended_levels_ = T - formula_T;
  return ladder;
}

OverlapDiagnostics overlap_diagnostics(const MixtureSpec& spec, const Ladder& ladder) {
  const double L = spec.local().smoothness();
  const double kappa = spec.local().condition_number();
  const double D = spec.max_displacement();
  const double d = spec.dimension();

  OverlapDiagnostics out;
  out.hellinger_floor = std::exp(-ladder.beta(0) * L * D * D / 2.0);
  const double spread = ladder.max_ratio() - 1.0;
  out.kl_ceiling = d * kappa * kappa / 4.0 * spread * spread;
  out.ceiling_margin = 1.0 - std::sqrt(out.kl_ceiling);
  out.overlap_margin = std::min(out.ceiling_margin, out.hellinger_floor * out.hellinger_floor);
  return out;
}

StepSizes step_sizes(const MixtureSpec& spec, const Ladder& ladder, double alpha, double q_adj, double eta,
                     double epsilon, double c) {
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (!(eta >= 1.0)) throw InvalidArgument("warm-start eta must be >= 1");
  if (!(c > 0.0 && c <= 0.01)) throw InvalidArgument("c must lie in (0, 0.01]");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  if (!(q_adj > 0.0 && q_adj < 1.0)) throw InvalidArgument("q_adj must lie in (0, 1)");

  const double L = spec.local().smoothness();
  const double m = spec.local().convexity();
  const double d = spec.dimension();
  const double T = ladder.size();

  const auto r = ladder.level_weights();
  const auto [rmin_it, rmax_it] = std::minmax_element(r.begin(), r.end());

  StepSizes out;
  out.r_min = *rmin_it;
  out.r_tilde = *rmin_it / *rmax_it;
  out.tau = alpha * (1.0 - alpha) * q_adj * out.r_tilde;
  const double log_term =
      2.0 * std::log(86.0 * T * eta / (out.tau * out.r_min * spec.min_weight() * epsilon));
  out.radius = 2.0 / std::sqrt(m) * std::max(std::sqrt(d), std::sqrt(std::max(0.0, log_term)));
  out.rwm_h = 1.0 / (L * d);
  const double reach = spec.max_displacement() + out.radius;
  out.mala_h = c / (L * L * reach * reach * d);
  return out;
}

DesignReport design_report(const MixtureSpec& spec, const Ladder& ladder, double alpha, double q_adj,
                           double eta, double epsilon, double c) {
  DesignReport rep;
  rep.levels = ladder.size();
  rep.beta1 = ladder.beta(0);
  rep.ratio = ladder.spacing_ratio() > 0.0 ? ladder.spacing_ratio() : ladder.max_ratio();
  rep.overlap = overlap_diagnostics(spec, ladder);
  rep.steps = step_sizes(spec, ladder, alpha, q_adj, eta, epsilon, c);
  return rep;
}

std::string design_csv_header() {
  return "T,beta1,ratio,hellinger_floor,kl_ceiling,overlap_margin,rwm_h,mala_h,tau,R";
}

std::string design_csv_row(const DesignReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.levels, r.beta1,
                r.ratio, r.overlap.hellinger_floor, r.overlap.kl_ceiling, r.overlap.overlap_margin,
                r.steps.rwm_h, r.steps.mala_h, r.steps.tau, r.steps.radius);
  return buf;
}

double overlap_factor(double rho, int dim) {
  if (!(rho >= 0.0)) throw InvalidArgument("rho must be nonnegative");
  if (dim < 1) throw InvalidArgument("dimension must be >= 1");
  const double base = 2.0 * std::sqrt(1.0 + rho) / (2.0 + rho);
  return std::exp(0.5 * dim * std::log(base));
}

namespace {

double location_quadratic_form(const Vector& mu, const Vector& mu2, const Vector& curvature) {
  const Vector delta = mu - mu2;
  return delta.dot(curvature.cwiseProduct(delta));
}

// int_b1^b2 (b2 - z) v(z) dz in the variable t = log z, which keeps the
// integrand smooth when b1 and b2 differ by orders of magnitude.
template <class V>
double kl_integral_adaptive(double b1, double b2, const V& v, double* error) {
  if (b1 == b2) {
    *error = 0.0;
    return 0.0;
  }
  auto integrand = [&](double t) {
    const double z = std::exp(t);
    return (b2 - z) * v(z) * z;
  };
  double err = 0.0;
  const double val = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, std::log(b1), std::log(b2), 20, 1e-14, &err);
  // boost accumulates Kronrod-vs-Gauss differences on the reference interval
  // [-1, 1]; rescaling by the full half-width over-estimates the absolute error.
  *error = err * std::abs(std::log(b2) - std::log(b1)) / 2.0;
  return val;
}

}  // namespace

GaussianOverlap gaussian_closed_forms(double beta, double beta2, const Vector& mu, const Vector& mu2,
                                      const Vector& curvature) {
  if (!(beta > 0.0) || !(beta2 > 0.0)) throw InvalidArgument("inverse temperatures must be positive");
  if (mu.size() != mu2.size() || mu.size() != curvature.size() || mu.size() < 1) {
    throw InvalidArgument("dimension mismatch");
  }
  const double d = static_cast<double>(mu.size());
  const double q = location_quadratic_form(mu, mu2, curvature);

  GaussianOverlap out;
  const double base = 2.0 * std::sqrt(beta * beta2) / (beta + beta2);
  out.hellinger = std::exp(0.5 * d * std::log(base) - beta * beta2 * q / (4.0 * (beta + beta2)));

  auto v = [d](double z) { return d / (2.0 * z * z); };
  double err = 0.0;
  const double temperature_part = kl_integral_adaptive(beta, beta2, v, &err);
  // The absolute target is 1e-10; for huge temperature spreads the value
  // itself exceeds 1e6 and only a relative floor is attainable in double.
  const double allowed = std::max(1e-10, 64.0 * std::numeric_limits<double>::epsilon() * std::abs(temperature_part));
  if (!(err <= allowed) || !std::isfinite(temperature_part)) {
    throw NumericalError("KL quadrature did not converge", err);
  }
  out.kl = std::max(0.0, temperature_part) + beta2 * q / 2.0;
  out.kl_error = err;
  return out;
}

GaussianOverlap gaussian_closed_forms(double beta, double beta2, const Vector& mu, const Vector& mu2) {
  return gaussian_closed_forms(beta, beta2, mu, mu2, Vector::Ones(mu.size()));
}

double kl_between_levels(const LocalPotential& local, double beta, double beta2,
                         std::span<const double> split_points, Rng* rng, int mc_draws) {
  if (!(beta > 0.0) || !(beta2 > 0.0)) throw InvalidArgument("inverse temperatures must be positive");
  if (beta == beta2) return 0.0;
  const double lo = std::min(beta, beta2);
  const double hi = std::max(beta, beta2);
  std::vector<double> nodes{lo};
  for (double s : split_points) {
    if (s > lo && s < hi) nodes.push_back(s);
  }
  nodes.push_back(hi);
  std::sort(nodes.begin(), nodes.end());
  const double sign = beta < beta2 ? 1.0 : -1.0;

  if (local.is_quadratic()) {
    const double d = local.dimension();
    auto v = [d](double z) { return d / (2.0 * z * z); };
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
      double err = 0.0;
      // integrand weight (beta2 - z) is fixed by the outer endpoints
      auto piece = [&](double t) {
        const double z = std::exp(t);
        return (beta2 - z) * v(z) * z;
      };
      total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
          piece, std::log(nodes[k]), std::log(nodes[k + 1]), 20, 1e-14, &err);
    }
    return sign * total;
  }

  if (rng == nullptr) throw InvalidArgument("a random generator is required for non-quadratic potentials");
  if (mc_draws < 2) throw InvalidArgument("mc_draws must be >= 2");
  const int d = local.dimension();
  const double m = local.convexity();
  // Common random numbers across nodes keep the plug-in v(z) smooth in z.
  std::vector<Vector> base(static_cast<std::size_t>(mc_draws));
  for (auto& z : base) z = rng->normal_vector(d);

  // Var_{p_z}(f) by self-normalized importance sampling from N(0, I/(z m));
  // weights exp(-z f(x) + z m |x|^2/2) <= 1 because f >= m|x|^2/2.
  auto v = [&](double z) {
    const double scale = 1.0 / std::sqrt(z * m);
    std::vector<double> logw(base.size()), f(base.size());
    for (std::size_t n = 0; n < base.size(); ++n) {
      const Vector x = scale * base[n];
      f[n] = local.value(x);
      logw[n] = -z * f[n] + 0.5 * z * m * x.squaredNorm();
    }
    const auto w = stats::softmax(logw);
    std::vector<double> wf(base.size()), wf2(base.size());
    for (std::size_t n = 0; n < base.size(); ++n) {
      wf[n] = w[n] * f[n];
      wf2[n] = w[n] * f[n] * f[n];
    }
    const double m1 = stats::pairwise_sum(wf);
    return std::max(0.0, stats::pairwise_sum(wf2) - m1 * m1);
  };

  double total = 0.0;
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    auto piece = [&](double t) {
      const double z = std::exp(t);
      return (beta2 - z) * v(z) * z;
    };
    total += boost::math::quadrature::gauss<double, 8>::integrate(piece, std::log(nodes[k]), std::log(nodes[k + 1]));
  }
  return sign * total;
}

}  // namespace stemper
