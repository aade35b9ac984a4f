#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stemper/common.hpp"
#include "stemper/ladder.hpp"
#include "stemper/rng.hpp"
#include "stemper/targets.hpp"

namespace stemper {

enum class ProposalKind { RWM, MALA };
enum class MoveType { XMove, SwapUp, SwapDown, Hold, LabelResample };

std::string to_string(ProposalKind kind);
std::string to_string(MoveType move);
ProposalKind parse_proposal_kind(const std::string& name);

struct TemperingConfig {
  ProposalKind proposal = ProposalKind::RWM;
  double step_size = 0.1;  ///< h; position proposals have variance 2h / beta_i
  double alpha = 0.5;      ///< probability of attempting a level move
  double q_adj = 0.5;      ///< probability of proposing each neighbour level
  bool lazy = false;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  /// Restrict the chain to levels [0, active_levels); unset means all.
  std::optional<int> active_levels;
  /// log C_i per level for the auxiliary chain when f has no analytic
  /// normalizer.
  std::vector<double> log_normalizers;

  void validate(const Ladder& ladder) const;
  int level_count(const Ladder& ladder) const;
};

struct TemperingState {
  int level = 0;
  Vector x;
};

struct AugState {
  int level = 0;
  int label = 0;
  Vector x;
};

struct TraceRecord {
  std::uint64_t step = 0;
  int level = 0;
  int label_nearest = 0;
  double x1 = 0.0;
  MoveType move = MoveType::Hold;
  bool accepted = false;
  bool lazy_hold = false;         ///< hold from the lazy pre-flip
  bool numerical_reject = false;  ///< proposal had non-finite U or grad U
};

struct StepResult {
  TemperingState state;
  TraceRecord record;
};

/// One transition of P* (or its lazy version).
StepResult st_step(const TemperingState& state, const MixtureSpec& spec, const Ladder& ladder,
                   const TemperingConfig& config, Rng& rng);

struct AugStepResult {
  AugState state;
  TraceRecord record;
};

/// One transition of the auxiliary chain P on (level, label, x).
AugStepResult aux_joint_step(const AugState& state, const MixtureSpec& spec, const Ladder& ladder,
                             const TemperingConfig& config, Rng& rng);

// Kernel pieces, exposed for reversibility and comparison checks.

/// Mean of the position proposal from x at any level.
Vector proposal_mean(const MixtureSpec& spec, const TemperingConfig& config, const Vector& x);
/// log Q_i(x, y) including the Gaussian normalizer.
double log_proposal_density(const MixtureSpec& spec, const Ladder& ladder, const TemperingConfig& config,
                            int level, const Vector& x, const Vector& y);
/// log acceptance ratio of a position move x -> y at `level` under P*.
double position_log_ratio(const MixtureSpec& spec, const Ladder& ladder, const TemperingConfig& config,
                          int level, const Vector& x, const Vector& y);
/// log acceptance ratio of a level move under P*:
/// zeta_to - zeta_from - (beta_to - beta_from) U(x).
double level_log_ratio(const Ladder& ladder, int from, int to, double potential);
/// log C_i used by the auxiliary chain (analytic or from the config table).
double aux_log_normalizer(const MixtureSpec& spec, const Ladder& ladder, const TemperingConfig& config,
                          int level);
/// log acceptance ratio of a level move under P with label j fixed.
double aux_level_log_ratio(const MixtureSpec& spec, const Ladder& ladder, const TemperingConfig& config,
                           int label, int from, int to, const Vector& x);

/// Level 0, x ~ N(mu_j, I / (beta_1 m)) with j uniform.
TemperingState default_initial_state(const MixtureSpec& spec, const Ladder& ladder, Rng& rng);
AugState default_initial_aug_state(const MixtureSpec& spec, const Ladder& ladder, Rng& rng);

struct ChainSummary {
  std::uint64_t steps = 0;
  std::vector<double> occupancy;  ///< fraction of post-step states per level
  std::vector<std::uint64_t> swap_attempts;  ///< per adjacent pair (i, i+1), both directions
  std::vector<std::uint64_t> swap_accepts;
  std::uint64_t x_moves = 0;
  std::uint64_t x_accepts = 0;
  std::uint64_t lazy_holds = 0;
  std::uint64_t numerical_rejects = 0;
  std::uint64_t label_resamples = 0;
  /// Changes of the nearest-mode label between consecutive states.
  std::uint64_t mode_traversals = 0;

  std::vector<double> swap_acceptance() const;
};

struct RunOptions {
  std::uint64_t n_steps = 0;
  std::uint64_t thin = 1;
  bool keep_trace = true;
  /// Stop early once this many position moves have been attempted.
  std::optional<std::uint64_t> max_x_moves;
  /// Called after every step with the new state.
  std::function<void(const TemperingState&, const TraceRecord&)> observer;
};

struct ChainRun {
  std::vector<TraceRecord> trace;  ///< initial record, then every `thin`-th step
  ChainSummary summary;
  TemperingState final_state;
};

ChainRun run_chain(const TemperingState& init, const MixtureSpec& spec, const Ladder& ladder,
                   const TemperingConfig& config, const RunOptions& options);

struct AugRunOptions {
  std::uint64_t n_steps = 0;
  std::uint64_t thin = 1;
  bool keep_trace = true;
  std::function<void(const AugState&, const TraceRecord&)> observer;
};

struct AugChainRun {
  std::vector<TraceRecord> trace;
  ChainSummary summary;
  AugState final_state;
  /// Visits to each (level, label) pair after each step, row-major by level.
  std::vector<std::uint64_t> label_counts;
};

AugChainRun run_chain(const AugState& init, const MixtureSpec& spec, const Ladder& ladder,
                      const TemperingConfig& config, const AugRunOptions& options);

}  // namespace stemper
