#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "stemper/common.hpp"
#include "stemper/report.hpp"
#include "stemper/rng.hpp"

namespace stemper {

/// Reversible finite chain: row-stochastic P with stationary vector pi.
struct FiniteChain {
  Matrix P;
  Vector pi;

  int size() const { return static_cast<int>(pi.size()); }
};

/// Throws InvalidChain unless rows sum to 1 (1e-12), entries are
/// nonnegative, pi is a positive simplex vector and
/// pi_k P_kl = pi_l P_lk within `reversibility_tol`.
void validate(const FiniteChain& chain, double reversibility_tol = 1e-10);
FiniteChain make_chain(Matrix P, Vector pi);

/// (I + P) / 2.
FiniteChain lazy(const FiniteChain& chain);
bool is_lazy(const FiniteChain& chain);

/// Flux matrix diag(pi) P.
Matrix flux(const FiniteChain& chain);
double dirichlet_form(const FiniteChain& chain, const Vector& g);
double stationary_variance(const FiniteChain& chain, const Vector& g);

/// 1 - second largest eigenvalue of diag(sqrt pi) P diag(sqrt pi)^{-1}.
/// +inf for a one-state chain (no non-constant functions).
double spectral_gap(const FiniteChain& chain);

inline constexpr int kMaxEnumerationStates = 22;
/// Tolerance on the Pi(A) <= 1/2 boundary during subset enumeration.
inline constexpr double kHalfMassTol = 1e-12;

struct ConductanceSearch {
  double value = 0.0;           ///< +inf when no admissible set exists
  std::uint32_t argmin = 0;     ///< bitmask of a minimizing set
  std::uint64_t admissible = 0;
};

/// Exact s-conductance: min of P(A, A^c) / (Pi(A) - s) over
/// Pi(A) in (s, 1/2], by Gray-code enumeration with incremental flows.
ConductanceSearch s_conductance_search(const FiniteChain& chain, double s);
double s_conductance_exact(const FiniteChain& chain, double s);

/// Whether some subset has stationary mass 1/2 (within kHalfMassTol).
bool has_half_mass_set(const FiniteChain& chain);

struct Partition {
  std::vector<int> labels;  ///< block index per state
  int blocks = 0;

  static Partition from_labels(std::vector<int> labels);
  std::vector<std::vector<int>> members() const;
};

struct Decomposition {
  std::vector<FiniteChain> restricted;  ///< P_k on each block, states in increasing order
  std::vector<std::vector<int>> members;
  FiniteChain projected;
};

Decomposition decompose(const FiniteChain& chain, const Partition& partition);

/// E^{k,l}(g) = sum over x in block k, y in block l of (g(y)-g(x))^2 pi(x) P(x,y).
Matrix block_dirichlet_terms(const FiniteChain& chain, const Partition& partition, const Vector& g);

/// gamma = max_k max_{x in X_k} P(x, X \ X_k).
double escape_rate(const FiniteChain& chain, const Partition& partition);

struct DecompositionReport {
  BoundReport report;
  bool theorem_hypothesis_met = false;
  double projected_gap = 0.0;
  double gamma = 0.0;
};

struct DecompositionOptions {
  std::vector<double> s_values{0.0, 0.05, 0.2};
  int random_functions = 100;
};

/// Checks the s-conductance decomposition bound (as a failure only when its
/// hypotheses hold: lambda(Pbar) <= 1 and every restricted chain has a
/// half-mass set, which is what the argument needs), the hypothesis-free
/// min-form behind it, the gap decomposition, the general variant, the
/// Dirichlet-form identity (1e-12) and the variance inequality.
DecompositionReport decomposition_check(const FiniteChain& chain, const Partition& partition,
                                        const DecompositionOptions& options, Rng& rng);

/// Finite Metropolis-Hastings chain with target `target` and proposal Q.
FiniteChain mh_finite(const Vector& target, const Matrix& proposal);

/// Random row-stochastic proposal with symmetric support (values are not
/// symmetric). `sparsity` zeroes off-diagonal pairs.
Matrix random_proposal(int n, Rng& rng, double sparsity = 0.0);

/// Two MH chains sharing proposal Q with targets pi1, pi2:
/// lambda(P1) >= c^2 lambda(P2) and Phi_s(P1) >= c^2 Phi_{cs}(P2), where
/// c = min_x min(pi1/pi2, pi2/pi1).
BoundReport comparison_check(const Vector& pi1, const Vector& pi2, const Matrix& proposal,
                             const std::vector<double>& s_values = {0.0, 0.05, 0.2});

struct TvCheck {
  BoundReport report;
  double eta = 1.0;
  std::vector<double> tv;  ///< measured TV at t = 0..horizon
};

/// ||nu P^t - Pi||_TV <= eta s + eta exp(-t Phi_s^2 / 2) for t <= horizon and
/// s in `s_values`, plus lambda/2 <= Phi_s <= 1/(1-2s) when a half-mass set
/// exists and monotonicity of Phi_s in s.
TvCheck tv_mixing_bound_check(const FiniteChain& chain, const Vector& nu, int horizon,
                              const std::vector<double>& s_values = {0.0, 0.01, 0.1});

struct RandomChainOptions {
  bool mirrored = false;  ///< pi_x = pi_{x + n/2}, n even
  bool make_lazy = true;
  double sparsity = 0.0;  ///< probability that an off-diagonal pair is zeroed
};

/// Dirichlet(1) stationary vector, symmetric random proposal, Metropolized.
FiniteChain random_reversible_chain(int n, Rng& rng, const RandomChainOptions& options = {});

/// Random partition with every block nonempty. With `mirrored`, the pairs
/// (x, x + n/2) share a block.
Partition random_partition(int n, int blocks, Rng& rng, bool mirrored = false);

void write_chain(std::ostream& out, const FiniteChain& chain);
FiniteChain read_chain(std::istream& in);

struct CampaignOptions {
  int chains = 1000;
  int min_states = 4;
  int max_states = 12;
  int min_blocks = 2;
  int max_blocks = 4;
  std::vector<double> s_values{0.0, 0.05, 0.2};
  bool mirrored = true;
  int random_functions = 100;
  std::uint64_t seed = 1;
};

struct CampaignReport {
  int chains = 0;
  std::size_t checks = 0;
  std::size_t failures = 0;
  std::size_t warnings = 0;
  int hypothesis_met = 0;
  std::vector<InequalityRecord> tightest;
  std::vector<InequalityRecord> failed;  ///< first few failures, for diagnosis

  bool passed() const { return failures == 0; }
};

CampaignReport run_decomposition_campaign(const CampaignOptions& options);

}  // namespace stemper
