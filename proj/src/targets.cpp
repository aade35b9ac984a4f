#include "stemper/targets.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "stemper/errors.hpp"
#include "stemper/ladder.hpp"
#include "stemper/stats.hpp"

namespace stemper {

namespace {

void require_finite(const Vector& x, const char* what) {
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (!std::isfinite(x(k))) throw NonFiniteInput(std::string(what) + " has a non-finite entry at coordinate " + std::to_string(k));
  }
}

void require_dimension(const MixtureSpec& spec, const Vector& x) {
  if (x.size() != spec.dimension()) {
    throw InvalidArgument("point has dimension " + std::to_string(x.size()) + ", spec expects " +
                          std::to_string(spec.dimension()));
  }
}

void require_level(const Ladder& ladder, int level) {
  if (level < 0 || level >= ladder.size()) throw InvalidArgument("level index out of range");
}

// log w_j - beta f(x - mu_j) for every component.
std::vector<double> component_exponents(const MixtureSpec& spec, double beta, const Vector& x) {
  std::vector<double> out(static_cast<std::size_t>(spec.components()));
  for (int j = 0; j < spec.components(); ++j) {
    const double f = spec.local().value(x - spec.mode(j));
    if (!std::isfinite(f)) {
      throw NonFiniteInput("local potential is not finite at component " + std::to_string(j), j);
    }
    out[static_cast<std::size_t>(j)] = spec.log_weights()[static_cast<std::size_t>(j)] - beta * f;
  }
  return out;
}

}  // namespace

LocalPotential LocalPotential::isotropic_quadratic(int dim) {
  if (dim < 1) throw InvalidArgument("dimension must be >= 1");
  LocalPotential p;
  p.kind_ = PotentialKind::IsotropicQuadratic;
  p.dim_ = dim;
  p.smoothness_ = 1.0;
  p.convexity_ = 1.0;
  p.curvature_ = Vector::Ones(dim);
  return p;
}

LocalPotential LocalPotential::diagonal_quadratic(Vector curvature, std::optional<double> smoothness,
                                                  std::optional<double> convexity) {
  if (curvature.size() < 1) throw InvalidArgument("curvature must be non-empty");
  require_finite(curvature, "curvature");
  if (curvature.minCoeff() <= 0.0) throw InvalidArgument("curvature entries must be positive");
  const double amax = curvature.maxCoeff();
  const double amin = curvature.minCoeff();
  const double L = smoothness.value_or(amax);
  const double m = convexity.value_or(amin);
  if (L < amax * (1.0 - 1e-12)) throw InvalidArgument("declared smoothness is below the largest curvature");
  if (m > amin * (1.0 + 1e-12)) throw InvalidArgument("declared convexity exceeds the smallest curvature");
  if (!(m > 0.0)) throw InvalidArgument("declared convexity must be positive");
  LocalPotential p;
  p.kind_ = PotentialKind::DiagonalQuadratic;
  p.dim_ = static_cast<int>(curvature.size());
  p.smoothness_ = L;
  p.convexity_ = m;
  p.curvature_ = std::move(curvature);
  return p;
}

LocalPotential LocalPotential::custom(int dim, ValueFn value, GradientFn gradient, double smoothness,
                                      double convexity) {
  if (dim < 1) throw InvalidArgument("dimension must be >= 1");
  if (!value || !gradient) throw InvalidArgument("custom potential needs value and gradient");
  if (!(convexity > 0.0) || !(smoothness >= convexity) || !std::isfinite(smoothness)) {
    throw InvalidArgument("need L >= m > 0");
  }
  LocalPotential p;
  p.kind_ = PotentialKind::Custom;
  p.dim_ = dim;
  p.smoothness_ = smoothness;
  p.convexity_ = convexity;
  p.value_ = std::move(value);
  p.gradient_ = std::move(gradient);
  return p;
}

double LocalPotential::value(const Vector& x) const {
  if (is_quadratic()) return 0.5 * x.dot(curvature_.cwiseProduct(x));
  return value_(x);
}

Vector LocalPotential::gradient(const Vector& x) const {
  if (is_quadratic()) return curvature_.cwiseProduct(x);
  return gradient_(x);
}

const Vector& LocalPotential::curvature() const {
  if (!is_quadratic()) throw Unsupported("curvature is defined for quadratic potentials only");
  return curvature_;
}

std::optional<double> LocalPotential::log_normalizer(double beta) const {
  if (!is_quadratic()) return std::nullopt;
  if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
  double acc = 0.0;
  for (Eigen::Index k = 0; k < curvature_.size(); ++k) {
    acc += 0.5 * std::log(2.0 * std::numbers::pi / (beta * curvature_(k)));
  }
  return acc;
}

MixtureSpec::MixtureSpec(std::vector<double> weights, std::vector<Vector> modes, LocalPotential local)
    : weights_(std::move(weights)), modes_(std::move(modes)), local_(std::move(local)) {
  if (weights_.empty()) throw InvalidArgument("mixture needs at least one component");
  if (weights_.size() != modes_.size()) throw InvalidArgument("weights and modes differ in length");
  double total = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    const double w = weights_[j];
    if (!std::isfinite(w) || w <= 0.0) {
      throw InvalidArgument("weight " + std::to_string(j) + " is not strictly positive");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("weights must sum to 1 within 1e-12");

  log_weights_.reserve(weights_.size());
  min_weight_ = 1.0;
  for (double w : weights_) {
    log_weights_.push_back(std::log(w));
    min_weight_ = std::min(min_weight_, w);
  }
  max_displacement_ = 0.0;
  for (std::size_t j = 0; j < modes_.size(); ++j) {
    if (modes_[j].size() != local_.dimension()) {
      throw InvalidArgument("mode " + std::to_string(j) + " has the wrong dimension");
    }
    require_finite(modes_[j], "mode");
    max_displacement_ = std::max(max_displacement_, modes_[j].norm());
  }
}

double mixture_potential(const MixtureSpec& spec, const Vector& x) {
  require_dimension(spec, x);
  require_finite(x, "x");
  const auto e = component_exponents(spec, 1.0, x);
  return -stats::log_sum_exp(e);
}

PotentialWithGradient mixture_potential_and_gradient(const MixtureSpec& spec, const Vector& x) {
  require_dimension(spec, x);
  require_finite(x, "x");
  const auto e = component_exponents(spec, 1.0, x);
  const double lse = stats::log_sum_exp(e);
  Vector grad = Vector::Zero(spec.dimension());
  for (int j = 0; j < spec.components(); ++j) {
    const double omega = std::exp(e[static_cast<std::size_t>(j)] - lse);
    if (omega == 0.0) continue;
    grad.noalias() += omega * spec.local().gradient(x - spec.mode(j));
  }
  for (Eigen::Index k = 0; k < grad.size(); ++k) {
    if (!std::isfinite(grad(k))) throw NonFiniteInput("mixture gradient is not finite at coordinate " + std::to_string(k));
  }
  return {-lse, std::move(grad)};
}

Vector mixture_gradient(const MixtureSpec& spec, const Vector& x) {
  return mixture_potential_and_gradient(spec, x).gradient;
}

LogDensity component_log_density(const MixtureSpec& spec, const Ladder& ladder, int level, int label,
                                 const Vector& x, bool normalized) {
  require_level(ladder, level);
  if (label < 0 || label >= spec.components()) throw InvalidArgument("label index out of range");
  require_dimension(spec, x);
  const double beta = ladder.beta(level);
  const double unnorm = -beta * spec.local().value(x - spec.mode(label));
  if (!normalized) return {unnorm, false};
  const auto logc = spec.local().log_normalizer(beta);
  if (!logc) throw Unsupported("no analytic normalizer for a custom local potential");
  return {unnorm - *logc, true};
}

std::vector<double> conditional_label_weights(const MixtureSpec& spec, const Ladder& ladder, int level,
                                              const Vector& x) {
  require_level(ladder, level);
  require_dimension(spec, x);
  require_finite(x, "x");
  return stats::softmax(component_exponents(spec, ladder.beta(level), x));
}

int nearest_mode(const MixtureSpec& spec, const Vector& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < spec.components(); ++j) {
    const double d = (x - spec.mode(j)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

}  // namespace stemper
