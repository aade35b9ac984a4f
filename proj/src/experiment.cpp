#include "stemper/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "stemper/diagnostics.hpp"
#include "stemper/finitelab.hpp"
#include "stemper/io.hpp"
#include "stemper/ladder.hpp"
#include "stemper/tempering.hpp"
#include "stemper/zconst.hpp"

namespace stemper {

namespace fs = std::filesystem;
using io::Json;

namespace {

struct Run {
  fs::path out;
  std::ostream& log;
  bool quiet;
  ExperimentResult result;
  Json manifest_files = Json::array();
  std::string task;
  std::chrono::steady_clock::time_point task_start;
  // Pseudo-log-weights produced by a calibrate task, reused downstream.
  std::vector<double> zeta;

  void say(const std::string& line) {
    if (!quiet) log << line << '\n';
  }

  void emit(const std::string& name, const std::string& text) {
    io::write_text(out / name, text);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - task_start).count();
    manifest_files.push_back({{"file", name}, {"sha256", io::sha256_hex(text)}, {"task", task}, {"wall_time_s", wall}});
    result.files.push_back(name);
  }

  void emit_json(const std::string& name, const Json& j) { emit(name, j.dump(2) + "\n"); }

  void verdict(const std::string& report, bool passed) {
    say("  " + report + ": " + (passed ? "pass" : "FAIL"));
    if (!passed) result.failing.push_back(report);
  }
};

TemperingConfig tempering_config(const SamplerConfig& s, const MixtureSpec& spec, const Ladder& ladder, Run& run,
                                 Json* h_info) {
  TemperingConfig tc;
  tc.proposal = parse_proposal_kind(s.proposal);
  tc.alpha = s.alpha;
  tc.q_adj = s.q_adj;
  tc.lazy = s.lazy;
  tc.seed = s.seed;
  Json info;
  if (s.h) {
    tc.step_size = *s.h;
    info = {{"h", *s.h}, {"source", "config"}};
  } else if (tc.proposal == ProposalKind::RWM) {
    const double L = spec.local().smoothness();
    const int d = spec.dimension();
    tc.step_size = 1.0 / (L * d);
    info = {{"h", tc.step_size}, {"source", "auto"}, {"rule", "1/(L d)"}, {"L", L}, {"d", d}};
  } else {
    const auto st = step_sizes(spec, ladder, s.alpha, s.q_adj, s.eta, s.epsilon, s.c);
    tc.step_size = st.mala_h;
    info = {{"h", tc.step_size}, {"source", "auto"}, {"rule", "step_sizes"},
            {"L", spec.local().smoothness()}, {"d", spec.dimension()}, {"T", ladder.size()},
            {"c", s.c}, {"eta", s.eta}, {"epsilon", s.epsilon}, {"R", io::number(st.radius)},
            {"tau", io::number(st.tau)}};
  }
  if (!s.h) {
    std::ostringstream msg;
    msg << "  auto step size: " << info.dump();
    run.say(msg.str());
  }
  if (h_info) *h_info = info;
  return tc;
}

Json ladder_json(const Ladder& ladder) {
  Json j;
  Json b = Json::array(), z = Json::array();
  for (double x : ladder.betas()) b.push_back(io::number(x));
  for (double x : ladder.log_weights()) z.push_back(io::number(x));
  j["betas"] = std::move(b);
  j["zeta"] = std::move(z);
  return j;
}

Ladder current_ladder(const ExperimentConfig& c, const MixtureSpec& spec, const Run& run) {
  Ladder ladder = build_configured_ladder(c, spec);
  if (!run.zeta.empty() && static_cast<int>(run.zeta.size()) == ladder.size()) ladder.set_log_weights(run.zeta);
  return ladder;
}

void task_sample(const ExperimentConfig& c, Run& run) {
  const auto spec = build_spec(*c.target);
  const auto ladder = current_ladder(c, spec, run);
  const auto& s = *c.sampler;
  Json h_info;
  const auto base = tempering_config(s, spec, ladder, run, &h_info);

  std::vector<ChainRun> runs(static_cast<std::size_t>(s.replicas));
  std::vector<std::exception_ptr> errors(runs.size());
  std::vector<std::thread> workers;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    workers.emplace_back([&, k] {
      try {
        auto tc = base;
        tc.stream = k;
        Rng init_rng(tc.seed, 0x696e6974ULL + k);
        RunOptions opts;
        opts.n_steps = s.steps;
        opts.thin = s.thin;
        runs[k] = run_chain(default_initial_state(spec, ladder, init_rng), spec, ladder, tc, opts);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  Json summary;
  summary["proposal"] = s.proposal;
  summary["step_size"] = h_info;
  summary["ladder"] = ladder_json(ladder);
  Json reps = Json::array();
  for (std::size_t k = 0; k < runs.size(); ++k) {
    std::string lines;
    for (const auto& r : runs[k].trace) lines += io::to_json(r).dump() + "\n";
    run.emit("trace_r" + std::to_string(k) + ".jsonl", lines);
    reps.push_back(io::to_json(runs[k].summary));
  }
  summary["replicas"] = std::move(reps);
  run.emit_json("sample_summary.json", summary);
}

void task_calibrate(const ExperimentConfig& c, Run& run) {
  const auto spec = build_spec(*c.target);
  const auto ladder = build_configured_ladder(c, spec);
  const auto tc = tempering_config(*c.sampler, spec, ladder, run, nullptr);
  const auto rep = calibrate_pseudo_weights(spec, ladder, tc, c.calibrate);
  Json j = io::to_json(rep);
  j["betas"] = ladder_json(ladder)["betas"];
  run.emit_json("calibration.json", j);
  if (rep.success) run.zeta = rep.zeta;
  run.verdict("calibrate", rep.success);
}

void task_verify_finite(const ExperimentConfig& c, Run& run) {
  const auto& f = c.finite;
  const auto campaign = run_decomposition_campaign(f.campaign);
  run.emit_json("finite_decomposition.json", io::to_json(campaign));
  run.verdict("verify-finite.decomposition", campaign.passed());

  // Comparison pairs: two targets with log density ratio in [-1/2, 1/2]
  // sharing one random proposal.
  Rng rng(f.campaign.seed, 0x636f6d70ULL);
  BoundReport comparison{"comparison"};
  for (int rep = 0; rep < f.comparison_pairs; ++rep) {
    const int n = 3 + rep % 8;
    const Matrix Q = random_proposal(n, rng, rep % 3 == 0 ? 0.4 : 0.0);
    Vector pi2(n), pi1(n);
    for (int x = 0; x < n; ++x) pi2(x) = rng.gamma(1.0);
    pi2 /= pi2.sum();
    for (int x = 0; x < n; ++x) pi1(x) = pi2(x) * std::exp(rng.uniform() - 0.5);
    pi1 /= pi1.sum();
    for (auto r : comparison_check(pi1, pi2, Q).records) {
      r.note = "pair " + std::to_string(rep) + (r.note.empty() ? "" : "; " + r.note);
      comparison.add(std::move(r));
    }
  }
  Json cj = io::to_json(BoundReport{"comparison", comparison.tightest()});
  cj["passed"] = comparison.passed();
  cj["pairs"] = f.comparison_pairs;
  cj["checks"] = comparison.records.size();
  run.emit_json("finite_comparison.json", cj);
  run.verdict("verify-finite.comparison", comparison.passed());

  Rng tv_rng(f.campaign.seed, 0x7476ULL);
  BoundReport tv{"tv-rate"};
  for (int rep = 0; rep < f.tv_chains; ++rep) {
    const int n = 4 + rep % 9;
    const auto chain = random_reversible_chain(n, tv_rng, {.mirrored = n % 2 == 0});
    Vector start = Vector::Zero(n);
    start(tv_rng.index(n)) = 1.0;
    for (auto r : tv_mixing_bound_check(chain, start, f.tv_horizon).report.records) {
      r.note = "chain " + std::to_string(rep) + (r.note.empty() ? "" : "; " + r.note);
      tv.add(std::move(r));
    }
  }
  Json tj = io::to_json(BoundReport{"tv-rate", tv.tightest()});
  tj["passed"] = tv.passed();
  tj["chains"] = f.tv_chains;
  tj["horizon"] = f.tv_horizon;
  tj["checks"] = tv.records.size();
  run.emit_json("finite_tv.json", tj);
  run.verdict("verify-finite.tv-rate", tv.passed());
}

void task_verify_bounds(const ExperimentConfig& c, Run& run) {
  const auto spec = build_spec(*c.target);
  const auto ladder = current_ladder(c, spec, run);
  const auto& b = c.bounds;
  const SamplerConfig sampler = c.sampler.value_or(SamplerConfig{});
  Json out;
  out["ladder"] = ladder_json(ladder);
  out["design"] = io::to_json(design_report(spec, ladder, sampler.alpha, sampler.q_adj, sampler.eta,
                                            sampler.epsilon, sampler.c));

  Rng rng(b.seed, 0x626f756eULL);
  const auto suite = inequality_suite(spec, ladder, rng, {.n_points = b.n_points});
  out["inequalities"] = io::to_json(suite);
  run.verdict("verify-bounds.inequalities", suite.passed());

  auto tc = tempering_config(sampler, spec, ladder, run, nullptr);
  tc.seed = b.seed;
  try {
    Rng prng(b.seed, 0x70726f6aULL);
    const auto est = projected_chain_estimate(spec, ladder, tc, prng, {.n_mc = b.n_mc});
    out["projected"] = io::to_json(est);
    run.verdict("verify-bounds.projected", est.report.passed());
  } catch (const Unsupported& e) {
    out["projected"] = {{"verdict", "skipped"}, {"note", e.what()}};
  }

  if (c.sampler) {
    try {
      Rng init_rng(b.seed, 0x696e6974ULL);
      RunOptions opts;
      opts.n_steps = sampler.steps;
      const auto live = run_chain(default_initial_state(spec, ladder, init_rng), spec, ladder, tc, opts);
      const auto swaps = swap_acceptance_check(live.trace, spec, ladder);
      out["swap_acceptance"] = io::to_json(swaps);
      run.verdict("verify-bounds.swap-acceptance", swaps.passed());
    } catch (const Unsupported& e) {
      out["swap_acceptance"] = {{"verdict", "skipped"}, {"note", e.what()}};
    }
  } else {
    out["swap_acceptance"] = {{"verdict", "skipped"}, {"note", "no [sampler] block for a live trace"}};
  }

  try {
    Rng wrng(b.seed, 0x77697443ULL);
    const auto w = counterexample_witness(spec, ladder, b.h, b.s, b.n_mc, wrng);
    out["counterexample"] = io::to_json(w);
    run.verdict("verify-bounds.counterexample", w.report.passed());
  } catch (const InvalidArgument& e) {
    out["counterexample"] = {{"verdict", "skipped"}, {"note", e.what()}};
  }
  run.emit_json("bounds.json", out);
}

std::string csv_number(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

void task_sweep(const ExperimentConfig& c, Run& run) {
  const auto& sw = *c.sweep;
  std::string csv = "d,D,beta1,rho,statistic,value\n";
  for (int d : sw.dims) {
    for (double D : sw.displacements) {
      const auto ladder = build_ladder(sw.smoothness, sw.convexity, d, D);
      Vector e = Vector::Zero(d);
      e(0) = D;
      const MixtureSpec spec({0.5, 0.5}, {e, Vector(-e)},
                             LocalPotential::diagonal_quadratic(Vector::Ones(d), sw.smoothness, sw.convexity));
      const auto ov = overlap_diagnostics(spec, ladder);
      const double beta1 = ladder.beta(0);
      const double rho = ladder.max_ratio() - 1.0;
      const std::vector<std::pair<std::string, double>> stats{
          {"T", static_cast<double>(ladder.size())},
          {"hellinger_floor", ov.hellinger_floor},
          {"kl_ceiling", ov.kl_ceiling},
          {"overlap_margin", ov.overlap_margin},
          {"flow_bound", hot_level_flow_bound(d, D, beta1, c.bounds.h, c.bounds.s)},
          {"ratio_bound", ladder_ratio_bound(ladder, d)},
      };
      for (const auto& [name, value] : stats) {
        csv += std::to_string(d) + "," + csv_number(D) + "," + csv_number(beta1) + "," + csv_number(rho) + "," +
               name + "," + csv_number(value) + "\n";
      }
    }
  }
  run.emit("sweep.csv", csv);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config_in, const fs::path& out_dir, const RunFlags& flags,
                                std::ostream& log) {
  ExperimentConfig c = config_in;
  if (flags.seed) {
    if (c.sampler) c.sampler->seed = *flags.seed;
    c.finite.campaign.seed = *flags.seed;
    c.bounds.seed = *flags.seed;
  }
  if (flags.replicas) {
    if (*flags.replicas < 1) throw ConfigError("replicas", "must be >= 1");
    if (c.sampler) c.sampler->replicas = *flags.replicas;
  }
  // Surface target and ladder problems before any task writes output.
  if (c.target) {
    const auto spec = build_spec(*c.target);
    (void)build_configured_ladder(c, spec);
  }

  fs::create_directories(out_dir);
  Run run{out_dir, log, flags.quiet, {}};
  const auto started = std::chrono::steady_clock::now();
  Json tasks = Json::array();
  for (const auto& t : c.tasks) {
    run.task = t;
    run.task_start = std::chrono::steady_clock::now();
    run.say("task " + t);
    if (t == "sample") task_sample(c, run);
    else if (t == "calibrate") task_calibrate(c, run);
    else if (t == "verify-finite") task_verify_finite(c, run);
    else if (t == "verify-bounds") task_verify_bounds(c, run);
    else if (t == "sweep") task_sweep(c, run);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - run.task_start).count();
    tasks.push_back({{"task", t}, {"wall_time_s", wall}});
  }

  run.result.status = run.result.failing.empty() ? 0 : 1;
  Json manifest;
  manifest["status"] = run.result.status;
  manifest["failing"] = run.result.failing;
  manifest["tasks"] = std::move(tasks);
  manifest["files"] = std::move(run.manifest_files);
  manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  manifest["config"] = to_toml(c);
  io::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return run.result;
}

int run_experiment_file(const std::string& config_path, const fs::path& out_dir, const RunFlags& flags,
                        std::ostream& log, std::ostream& err) {
  try {
    const auto config = load_config(config_path);
    const auto result = run_experiment(config, out_dir, flags, log);
    if (result.status != 0) {
      err << "failing reports:";
      for (const auto& f : result.failing) err << ' ' << f;
      err << '\n';
    }
    return result.status;
  } catch (const ConfigError& e) {
    err << config_path;
    if (e.line() > 0) err << ':' << e.line() << ':' << e.column();
    err << ": config error";
    if (!e.field().empty()) err << " in '" << e.field() << "'";
    err << ": " << e.what() << '\n';
    return 2;
  }
}

}  // namespace stemper
