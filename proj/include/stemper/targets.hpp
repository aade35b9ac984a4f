#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "stemper/common.hpp"

namespace stemper {

class Ladder;

enum class PotentialKind { IsotropicQuadratic, DiagonalQuadratic, Custom };

/// The local potential f shared by every mixture component: minimized at
/// the origin with f(0) = 0, L-smooth and m-strongly convex. L and m are
/// declared by the caller, never estimated.
class LocalPotential {
 public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradientFn = std::function<Vector(const Vector&)>;

  /// f(x) = |x|^2 / 2, L = m = 1.
  static LocalPotential isotropic_quadratic(int dim);
  /// f(x) = sum_k a_k x_k^2 / 2. Declared constants default to
  /// m = min a, L = max a; looser declarations (L >= max a, m <= min a)
  /// are accepted.
  static LocalPotential diagonal_quadratic(Vector curvature,
                                           std::optional<double> smoothness = std::nullopt,
                                           std::optional<double> convexity = std::nullopt);
  static LocalPotential custom(int dim, ValueFn value, GradientFn gradient, double smoothness,
                               double convexity);

  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;

  PotentialKind kind() const { return kind_; }
  bool is_quadratic() const { return kind_ != PotentialKind::Custom; }
  int dimension() const { return dim_; }
  double smoothness() const { return smoothness_; }
  double convexity() const { return convexity_; }
  double condition_number() const { return smoothness_ / convexity_; }
  /// Diagonal curvature of a quadratic potential (all ones for isotropic).
  const Vector& curvature() const;

  /// log of int exp(-beta f(x)) dx; available for quadratics only.
  std::optional<double> log_normalizer(double beta) const;

 private:
  LocalPotential() = default;

  PotentialKind kind_ = PotentialKind::Custom;
  int dim_ = 0;
  double smoothness_ = 1.0;
  double convexity_ = 1.0;
  Vector curvature_;
  ValueFn value_;
  GradientFn gradient_;
};

/// Mixture target pi*(x) ∝ sum_j w_j exp(-f(x - mu_j)).
class MixtureSpec {
 public:
  MixtureSpec(std::vector<double> weights, std::vector<Vector> modes, LocalPotential local);

  int components() const { return static_cast<int>(weights_.size()); }
  int dimension() const { return local_.dimension(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& log_weights() const { return log_weights_; }
  const std::vector<Vector>& modes() const { return modes_; }
  const Vector& mode(int j) const { return modes_.at(static_cast<std::size_t>(j)); }
  const LocalPotential& local() const { return local_; }

  /// D = max_j |mu_j|.
  double max_displacement() const { return max_displacement_; }
  double min_weight() const { return min_weight_; }

 private:
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  std::vector<Vector> modes_;
  LocalPotential local_;
  double max_displacement_ = 0.0;
  double min_weight_ = 1.0;
};

/// U(x) = -log sum_j w_j exp(-f(x - mu_j)).
double mixture_potential(const MixtureSpec& spec, const Vector& x);

/// grad U(x) = sum_j omega(x, j) grad f(x - mu_j), omega the softmax of
/// log w_j - f(x - mu_j).
Vector mixture_gradient(const MixtureSpec& spec, const Vector& x);

struct PotentialWithGradient {
  double value;
  Vector gradient;
};

/// Both U and grad U from one pass over the components.
PotentialWithGradient mixture_potential_and_gradient(const MixtureSpec& spec, const Vector& x);

struct LogDensity {
  double value;
  bool normalized;
};

/// log pi_{i,j}(x) = -beta_i f(x - mu_j) - log C_i. With `normalized`
/// false the -log C_i term is omitted.
LogDensity component_log_density(const MixtureSpec& spec, const Ladder& ladder, int level, int label,
                                 const Vector& x, bool normalized);

/// pi_{i,x}(j) ∝ w_j exp(-beta_i f(x - mu_j)).
std::vector<double> conditional_label_weights(const MixtureSpec& spec, const Ladder& ladder,
                                              int level, const Vector& x);

/// Index of the closest mode in Euclidean distance (ties to the lower index).
int nearest_mode(const MixtureSpec& spec, const Vector& x);

}  // namespace stemper
