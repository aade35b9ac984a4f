#include "stemper/tempering.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "stemper/errors.hpp"

namespace stemper {

std::string to_string(ProposalKind kind) { return kind == ProposalKind::RWM ? "rwm" : "mala"; }

std::string to_string(MoveType move) {
  switch (move) {
    case MoveType::XMove: return "x-move";
    case MoveType::SwapUp: return "swap-up";
    case MoveType::SwapDown: return "swap-down";
    case MoveType::Hold: return "hold";
    case MoveType::LabelResample: return "label";
  }
  return "hold";
}

ProposalKind parse_proposal_kind(const std::string& name) {
  if (name == "rwm" || name == "RWM") return ProposalKind::RWM;
  if (name == "mala" || name == "MALA") return ProposalKind::MALA;
  throw InvalidArgument("unknown proposal kind '" + name + "' (expected rwm or mala)");
}

void TemperingConfig::validate(const Ladder& ladder) const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw InvalidArgument("step size must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  if (!(q_adj > 0.0 && q_adj <= 0.5)) throw InvalidArgument("q_adj must lie in (0, 1/2]");
  if (active_levels && (*active_levels < 1 || *active_levels > ladder.size())) {
    throw InvalidArgument("active_levels must lie in [1, T]");
  }
  if (!log_normalizers.empty() && static_cast<int>(log_normalizers.size()) != ladder.size()) {
    throw InvalidArgument("log normalizer table needs one entry per level");
  }
}

int TemperingConfig::level_count(const Ladder& ladder) const { return active_levels.value_or(ladder.size()); }

namespace {

struct Eval {
  double U = 0.0;
  Vector grad;
  bool ok = true;
};

Eval evaluate(const MixtureSpec& spec, const Vector& x, bool need_grad) {
  Eval e;
  try {
    if (need_grad) {
      auto pg = mixture_potential_and_gradient(spec, x);
      e.U = pg.value;
      e.grad = std::move(pg.gradient);
    } else {
      e.U = mixture_potential(spec, x);
    }
  } catch (const NonFiniteInput&) {
    e.ok = false;
  }
  if (!std::isfinite(e.U)) e.ok = false;
  return e;
}

Vector mean_from(const TemperingConfig& config, const Vector& x, const Vector& grad) {
  if (config.proposal == ProposalKind::MALA) return x - config.step_size * grad;
  return x;
}

// log Q_i(a, b) up to the Gaussian normalizer, which cancels in ratios.
double log_q_kernel(double beta, double h, const Vector& mean_a, const Vector& b) {
  return -beta * (b - mean_a).squaredNorm() / (4.0 * h);
}

bool accept(double log_ratio, Rng& rng) {
  const double u = rng.uniform();
  return std::log(u) < log_ratio;
}

int choose_level_target(int level, double q_adj, Rng& rng, MoveType& move) {
  const double u = rng.uniform();
  if (u < q_adj) {
    move = MoveType::SwapUp;
    return level + 1;
  }
  if (u < 2.0 * q_adj) {
    move = MoveType::SwapDown;
    return level - 1;
  }
  move = MoveType::Hold;
  return level;
}

int sample_categorical(const std::vector<double>& p, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    acc += p[j];
    if (u < acc) return static_cast<int>(j);
  }
  return static_cast<int>(p.size()) - 1;
}

void fill_position(TraceRecord& rec, const MixtureSpec& spec, int level, const Vector& x) {
  rec.level = level;
  rec.label_nearest = nearest_mode(spec, x);
  rec.x1 = x(0);
}

// "Up" means towards larger beta (colder), i.e. a larger level index.
class StKernel {
 public:
  StKernel(const MixtureSpec& spec, const Ladder& ladder, const TemperingConfig& config)
      : spec_(spec), ladder_(ladder), config_(config), levels_(config.level_count(ladder)) {
    config.validate(ladder);
  }

  void reset(const TemperingState& s) {
    if (s.level < 0 || s.level >= levels_) throw InvalidArgument("initial level outside the active range");
    if (s.x.size() != spec_.dimension()) throw InvalidArgument("initial point has the wrong dimension");
    state_ = s;
    cur_ = evaluate(spec_, state_.x, config_.proposal == ProposalKind::MALA);
    if (!cur_.ok) throw NonFiniteInput("potential is not finite at the initial point");
  }

  const TemperingState& state() const { return state_; }

  TraceRecord step(Rng& rng) {
    TraceRecord rec;
    if (config_.lazy && rng.uniform() < 0.5) {
      rec.move = MoveType::Hold;
      rec.accepted = true;
      rec.lazy_hold = true;
    } else if (rng.uniform() < config_.alpha) {
      level_move(rng, rec);
    } else {
      position_move(rng, rec);
    }
    fill_position(rec, spec_, state_.level, state_.x);
    return rec;
  }

 private:
  void level_move(Rng& rng, TraceRecord& rec) {
    const int to = choose_level_target(state_.level, config_.q_adj, rng, rec.move);
    if (rec.move == MoveType::Hold || to < 0 || to >= levels_) {
      rec.move = MoveType::Hold;
      rec.accepted = true;
      return;
    }
    rec.accepted = accept(level_log_ratio(ladder_, state_.level, to, cur_.U), rng);
    if (rec.accepted) state_.level = to;
  }

  void position_move(Rng& rng, TraceRecord& rec) {
    rec.move = MoveType::XMove;
    const double beta = ladder_.beta(state_.level);
    const double h = config_.step_size;
    const bool mala = config_.proposal == ProposalKind::MALA;
    const Vector mx = mean_from(config_, state_.x, cur_.grad);
    const Vector y = mx + std::sqrt(2.0 * h / beta) * rng.normal_vector(spec_.dimension());
    Eval next = evaluate(spec_, y, mala);
    if (!next.ok) {
      rng.uniform();  // keep the stream aligned with the accepted/rejected path
      rec.accepted = false;
      rec.numerical_reject = true;
      return;
    }
    double log_ratio = -beta * (next.U - cur_.U);
    if (mala) {
      const Vector my = mean_from(config_, y, next.grad);
      log_ratio += log_q_kernel(beta, h, my, state_.x) - log_q_kernel(beta, h, mx, y);
    }
    if (std::isnan(log_ratio)) {
      rng.uniform();
      rec.accepted = false;
      rec.numerical_reject = true;
      return;
    }
    rec.accepted = accept(log_ratio, rng);
    if (rec.accepted) {
      state_.x = y;
      cur_ = std::move(next);
    }
  }

  const MixtureSpec& spec_;
  const Ladder& ladder_;
  const TemperingConfig& config_;
  int levels_;
  TemperingState state_;
  Eval cur_;
};

}  // namespace

Vector proposal_mean(const MixtureSpec& spec, const TemperingConfig& config, const Vector& x) {
  if (config.proposal == ProposalKind::MALA) return x - config.step_size * mixture_gradient(spec, x);
  return x;
}

double log_proposal_density(const MixtureSpec& spec, const Ladder& ladder, const TemperingConfig& config,
                            int level, const Vector& x, const Vector& y) {
  const double beta = ladder.beta(level);
  const double h = config.step_size;
  const double d = spec.dimension();
  const double var = 2.0 * h / beta;
  return log_q_kernel(beta, h, proposal_mean(spec, config, x), y) - 0.5 * d * std::log(2.0 * std::numbers::pi * var);
}

double position_log_ratio(const MixtureSpec& spec, const Ladder& ladder, const TemperingConfig& config,
                          int level, const Vector& x, const Vector& y) {
  const double beta = ladder.beta(level);
  double r = -beta * (mixture_potential(spec, y) - mixture_potential(spec, x));
  if (config.proposal == ProposalKind::MALA) {
    r += log_proposal_density(spec, ladder, config, level, y, x) -
         log_proposal_density(spec, ladder, config, level, x, y);
  }
  return r;
}

double level_log_ratio(const Ladder& ladder, int from, int to, double potential) {
  const auto& z = ladder.log_weights();
  return z[static_cast<std::size_t>(to)] - z[static_cast<std::size_t>(from)] -
         (ladder.beta(to) - ladder.beta(from)) * potential;
}

double aux_log_normalizer(const MixtureSpec& spec, const Ladder& ladder, const TemperingConfig& config,
                          int level) {
  if (!config.log_normalizers.empty()) return config.log_normalizers.at(static_cast<std::size_t>(level));
  const auto c = spec.local().log_normalizer(ladder.beta(level));
  if (!c) throw Unsupported("auxiliary chain needs a log C table for a non-quadratic local potential");
  return *c;
}

double aux_level_log_ratio(const MixtureSpec& spec, const Ladder& ladder, const TemperingConfig& config,
                           int label, int from, int to, const Vector& x) {
  // Level weights r_i ∝ exp(zeta_i); the ratio only needs log r differences.
  const auto& z = ladder.log_weights();
  const double f = spec.local().value(x - spec.mode(label));
  return z[static_cast<std::size_t>(to)] - z[static_cast<std::size_t>(from)] +
         aux_log_normalizer(spec, ladder, config, from) - aux_log_normalizer(spec, ladder, config, to) -
         (ladder.beta(to) - ladder.beta(from)) * f;
}

StepResult st_step(const TemperingState& state, const MixtureSpec& spec, const Ladder& ladder,
                   const TemperingConfig& config, Rng& rng) {
  StKernel kernel(spec, ladder, config);
  kernel.reset(state);
  TraceRecord rec = kernel.step(rng);
  return {kernel.state(), rec};
}

AugStepResult aux_joint_step(const AugState& state, const MixtureSpec& spec, const Ladder& ladder,
                             const TemperingConfig& config, Rng& rng) {
  config.validate(ladder);
  const int levels = config.level_count(ladder);
  if (state.level < 0 || state.level >= levels) throw InvalidArgument("level outside the active range");
  if (state.label < 0 || state.label >= spec.components()) throw InvalidArgument("label out of range");
  // Fail early rather than on the first level move.
  aux_log_normalizer(spec, ladder, config, state.level);

  AugState next = state;
  TraceRecord rec;
  if (config.lazy && rng.uniform() < 0.5) {
    rec.move = MoveType::Hold;
    rec.accepted = true;
    rec.lazy_hold = true;
  } else if (rng.uniform() < 0.5) {
    rec.move = MoveType::LabelResample;
    rec.accepted = true;
    next.label = sample_categorical(conditional_label_weights(spec, ladder, state.level, state.x), rng);
  } else if (rng.uniform() < config.alpha) {
    const int to = choose_level_target(state.level, config.q_adj, rng, rec.move);
    if (rec.move == MoveType::Hold || to < 0 || to >= levels) {
      rec.move = MoveType::Hold;
      rec.accepted = true;
    } else {
      rec.accepted = accept(aux_level_log_ratio(spec, ladder, config, state.label, state.level, to, state.x), rng);
      if (rec.accepted) next.level = to;
    }
  } else {
    rec.move = MoveType::XMove;
    const double beta = ladder.beta(state.level);
    const double h = config.step_size;
    const bool mala = config.proposal == ProposalKind::MALA;
    const Eval cur = evaluate(spec, state.x, mala);
    const Vector mx = mean_from(config, state.x, cur.grad);
    const Vector y = mx + std::sqrt(2.0 * h / beta) * rng.normal_vector(spec.dimension());
    const Eval prop = evaluate(spec, y, mala);
    const Vector& mu = spec.mode(state.label);
    double log_ratio = -beta * (spec.local().value(y - mu) - spec.local().value(state.x - mu));
    if (mala && prop.ok) {
      log_ratio += log_q_kernel(beta, h, mean_from(config, y, prop.grad), state.x) - log_q_kernel(beta, h, mx, y);
    }
    if (!prop.ok || std::isnan(log_ratio)) {
      rng.uniform();
      rec.accepted = false;
      rec.numerical_reject = true;
    } else {
      rec.accepted = accept(log_ratio, rng);
      if (rec.accepted) next.x = y;
    }
  }
  fill_position(rec, spec, next.level, next.x);
  return {next, rec};
}

TemperingState default_initial_state(const MixtureSpec& spec, const Ladder& ladder, Rng& rng) {
  const int j = rng.index(spec.components());
  const double sd = 1.0 / std::sqrt(ladder.beta(0) * spec.local().convexity());
  return {0, spec.mode(j) + sd * rng.normal_vector(spec.dimension())};
}

AugState default_initial_aug_state(const MixtureSpec& spec, const Ladder& ladder, Rng& rng) {
  const int j = rng.index(spec.components());
  const double sd = 1.0 / std::sqrt(ladder.beta(0) * spec.local().convexity());
  return {0, j, spec.mode(j) + sd * rng.normal_vector(spec.dimension())};
}

std::vector<double> ChainSummary::swap_acceptance() const {
  std::vector<double> out(swap_attempts.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = swap_attempts[i] ? static_cast<double>(swap_accepts[i]) / static_cast<double>(swap_attempts[i])
                              : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

namespace {

class SummaryBuilder {
 public:
  SummaryBuilder(int levels) : counts_(static_cast<std::size_t>(levels), 0) {
    s_.swap_attempts.assign(levels > 1 ? static_cast<std::size_t>(levels - 1) : 0, 0);
    s_.swap_accepts = s_.swap_attempts;
  }

  void add(const TraceRecord& rec, int from_level, int prev_label) {
    ++s_.steps;
    ++counts_[static_cast<std::size_t>(rec.level)];
    if (rec.lazy_hold) ++s_.lazy_holds;
    if (rec.numerical_reject) ++s_.numerical_rejects;
    if (rec.label_nearest != prev_label) ++s_.mode_traversals;
    switch (rec.move) {
      case MoveType::XMove:
        ++s_.x_moves;
        if (rec.accepted) ++s_.x_accepts;
        break;
      case MoveType::SwapUp:
      case MoveType::SwapDown: {
        const int pair = rec.move == MoveType::SwapUp ? from_level : from_level - 1;
        ++s_.swap_attempts[static_cast<std::size_t>(pair)];
        if (rec.accepted) ++s_.swap_accepts[static_cast<std::size_t>(pair)];
        break;
      }
      case MoveType::LabelResample: ++s_.label_resamples; break;
      case MoveType::Hold: break;
    }
  }

  ChainSummary finish(int initial_level) {
    if (s_.steps == 0) counts_[static_cast<std::size_t>(initial_level)] = 1;
    const double total = s_.steps ? static_cast<double>(s_.steps) : 1.0;
    s_.occupancy.clear();
    for (auto c : counts_) s_.occupancy.push_back(static_cast<double>(c) / total);
    return s_;
  }

  const ChainSummary& partial() const { return s_; }

 private:
  ChainSummary s_;
  std::vector<std::uint64_t> counts_;
};

TraceRecord initial_record(const MixtureSpec& spec, int level, const Vector& x) {
  TraceRecord rec;
  rec.move = MoveType::Hold;
  fill_position(rec, spec, level, x);
  return rec;
}

}  // namespace

ChainRun run_chain(const TemperingState& init, const MixtureSpec& spec, const Ladder& ladder,
                   const TemperingConfig& config, const RunOptions& options) {
  if (options.thin < 1) throw InvalidArgument("thin must be >= 1");
  StKernel kernel(spec, ladder, config);
  kernel.reset(init);
  Rng rng(config.seed, config.stream);

  ChainRun run;
  SummaryBuilder summary(config.level_count(ladder));
  if (options.keep_trace) run.trace.push_back(initial_record(spec, init.level, init.x));

  int prev_label = nearest_mode(spec, init.x);
  for (std::uint64_t t = 1; t <= options.n_steps; ++t) {
    const int from = kernel.state().level;
    TraceRecord rec = kernel.step(rng);
    rec.step = t;
    summary.add(rec, from, prev_label);
    prev_label = rec.label_nearest;
    if (options.observer) options.observer(kernel.state(), rec);
    if (options.keep_trace && t % options.thin == 0) run.trace.push_back(rec);
    if (options.max_x_moves && summary.partial().x_moves >= *options.max_x_moves) break;
  }
  run.summary = summary.finish(init.level);
  run.final_state = kernel.state();
  return run;
}

AugChainRun run_chain(const AugState& init, const MixtureSpec& spec, const Ladder& ladder,
                      const TemperingConfig& config, const AugRunOptions& options) {
  if (options.thin < 1) throw InvalidArgument("thin must be >= 1");
  Rng rng(config.seed, config.stream);
  AugChainRun run;
  const int levels = config.level_count(ladder);
  SummaryBuilder summary(levels);
  run.label_counts.assign(static_cast<std::size_t>(levels * spec.components()), 0);
  if (options.keep_trace) run.trace.push_back(initial_record(spec, init.level, init.x));

  AugState state = init;
  int prev_label = nearest_mode(spec, init.x);
  for (std::uint64_t t = 1; t <= options.n_steps; ++t) {
    const int from = state.level;
    auto [next, rec] = aux_joint_step(state, spec, ladder, config, rng);
    state = std::move(next);
    rec.step = t;
    summary.add(rec, from, prev_label);
    prev_label = rec.label_nearest;
    ++run.label_counts[static_cast<std::size_t>(state.level * spec.components() + state.label)];
    if (options.observer) options.observer(state, rec);
    if (options.keep_trace && t % options.thin == 0) run.trace.push_back(rec);
  }
  run.summary = summary.finish(init.level);
  run.final_state = state;
  return run;
}

}  // namespace stemper
