#include "stemper/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "stemper/rng.hpp"

namespace stemper {

ConfigError::ConfigError(std::string field, std::string message, int line, int column)
    : Error(message), field_(std::move(field)), line_(line), column_(column) {}

namespace {

[[noreturn]] void fail_at(const std::string& field, const std::string& msg, const toml::source_region& src) {
  throw ConfigError(field, msg, static_cast<int>(src.begin.line), static_cast<int>(src.begin.column));
}

// Typed access to one table, remembering which keys were consumed so that
// typos surface as errors instead of silently falling back to defaults.
class Reader {
 public:
  Reader(const toml::table& table, std::string prefix) : table_(table), prefix_(std::move(prefix)) {}

  std::string field(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const toml::node* find(const std::string& key) {
    used_.insert(key);
    return table_.get(key);
  }

  void get(const std::string& key, double& out) {
    if (const auto* n = find(key)) out = as_double(*n, field(key));
  }
  void get(const std::string& key, std::optional<double>& out) {
    if (const auto* n = find(key)) out = as_double(*n, field(key));
  }
  void get(const std::string& key, bool& out) {
    if (const auto* n = find(key)) {
      if (!n->is_boolean()) fail_at(field(key), "expected a boolean", n->source());
      out = n->as_boolean()->get();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const auto* n = find(key)) {
      if (!n->is_string()) fail_at(field(key), "expected a string", n->source());
      out = n->as_string()->get();
    }
  }
  void get(const std::string& key, int& out) {
    if (const auto* n = find(key)) out = static_cast<int>(as_integer(*n, field(key), -(1ll << 31), (1ll << 31) - 1));
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const auto* n = find(key)) out = static_cast<std::uint64_t>(as_integer(*n, field(key), 0, INT64_MAX));
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const auto* n = find(key)) {
      out.clear();
      for (const auto& e : array(*n, field(key))) out.push_back(as_double(e, field(key)));
    }
  }
  void get(const std::string& key, std::vector<int>& out) {
    if (const auto* n = find(key)) {
      out.clear();
      for (const auto& e : array(*n, field(key))) out.push_back(static_cast<int>(as_integer(e, field(key), 1, 1 << 20)));
    }
  }
  void get(const std::string& key, std::vector<std::string>& out) {
    if (const auto* n = find(key)) {
      out.clear();
      for (const auto& e : array(*n, field(key))) {
        if (!e.is_string()) fail_at(field(key), "expected an array of strings", e.source());
        out.push_back(e.as_string()->get());
      }
    }
  }
  void get(const std::string& key, std::vector<std::vector<double>>& out) {
    if (const auto* n = find(key)) {
      out.clear();
      for (const auto& row : array(*n, field(key))) {
        std::vector<double> v;
        for (const auto& e : array(row, field(key))) v.push_back(as_double(e, field(key)));
        out.push_back(std::move(v));
      }
    }
  }

  void finish() const {
    for (const auto& [k, v] : table_) {
      if (!used_.count(std::string(k.str()))) fail_at(field(std::string(k.str())), "unknown key", k.source());
    }
  }

 private:
  static double as_double(const toml::node& n, const std::string& f) {
    if (n.is_floating_point()) return n.as_floating_point()->get();
    if (n.is_integer()) return static_cast<double>(n.as_integer()->get());
    fail_at(f, "expected a number", n.source());
  }
  static std::int64_t as_integer(const toml::node& n, const std::string& f, std::int64_t lo, std::int64_t hi) {
    if (!n.is_integer()) fail_at(f, "expected an integer", n.source());
    const auto v = n.as_integer()->get();
    if (v < lo || v > hi) fail_at(f, "integer out of range", n.source());
    return v;
  }
  static const toml::array& array(const toml::node& n, const std::string& f) {
    if (!n.is_array()) fail_at(f, "expected an array", n.source());
    return *n.as_array();
  }

  const toml::table& table_;
  std::string prefix_;
  std::set<std::string> used_;
};

const toml::table* subtable(const toml::table& root, const std::string& key) {
  const auto* n = root.get(key);
  if (!n) return nullptr;
  if (!n->is_table()) fail_at(key, "expected a table", n->source());
  return n->as_table();
}

void require(bool ok, const std::string& field, const std::string& msg, const toml::node* where) {
  if (ok) return;
  if (where) fail_at(field, msg, where->source());
  throw ConfigError(field, msg);
}

void validate(const ExperimentConfig& c, const toml::table& root) {
  auto at = [&](const std::string& path) -> const toml::node* {
    const auto v = root.at_path(path);
    return v ? v.node() : nullptr;
  };
  for (const auto& t : c.tasks) {
    require(std::find(known_tasks().begin(), known_tasks().end(), t) != known_tasks().end(), "tasks",
            "unknown task '" + t + "'", at("tasks"));
    if (t == "sample" || t == "calibrate") {
      require(c.target.has_value(), "target", "task '" + t + "' needs a [target] block", at("tasks"));
      require(c.sampler.has_value(), "sampler", "task '" + t + "' needs a [sampler] block", at("tasks"));
    }
    if (t == "verify-bounds") require(c.target.has_value(), "target", "task 'verify-bounds' needs a [target] block", at("tasks"));
    if (t == "sweep") require(c.sweep.has_value(), "sweep", "task 'sweep' needs a [sweep] block", at("tasks"));
  }
  if (c.target) {
    const auto& t = *c.target;
    require(t.potential == "isotropic" || t.potential == "diagonal", "target.potential",
            "must be 'isotropic' or 'diagonal'", at("target.potential"));
    require(t.dim >= 1, "target.dim", "must be >= 1", at("target.dim"));
    if (t.potential == "diagonal") {
      require(static_cast<int>(t.curvature.size()) == t.dim, "target.curvature", "needs one entry per dimension",
              at("target.curvature"));
    }
    if (t.modes.empty()) {
      require(t.mode_rule == "antipodal" || t.mode_rule == "sphere", "target.mode_rule",
              "give modes explicitly or set mode_rule to 'antipodal' or 'sphere'", at("target.mode_rule"));
      require(t.mode_rule != "antipodal" || t.components == 2, "target.components", "antipodal rule makes 2 modes",
              at("target.components"));
    }
  }
  if (c.ladder.kind == "explicit") {
    const auto& b = c.ladder.betas;
    bool ok = !b.empty() && b.back() == 1.0;
    for (std::size_t i = 0; ok && i < b.size(); ++i) ok = b[i] > 0.0 && (i == 0 || b[i] > b[i - 1]);
    require(ok, "ladder.betas", "explicit betas must be strictly increasing and end at 1", at("ladder.betas"));
  } else {
    require(c.ladder.kind == "auto", "ladder.kind", "must be 'auto' or 'explicit'", at("ladder.kind"));
  }
  require(c.calibrate.per_level_budget >= 10000, "calibrate.per_level_budget", "must be >= 10000",
          at("calibrate.per_level_budget"));
  require(c.calibrate.burn_in_fraction >= 0.0 && c.calibrate.burn_in_fraction < 1.0, "calibrate.burn_in_fraction",
          "must lie in [0, 1)", at("calibrate.burn_in_fraction"));
  require(c.bounds.n_points >= 1000, "verify_bounds.n_points", "must be >= 1000", at("verify_bounds.n_points"));
  require(c.bounds.n_mc >= 10000, "verify_bounds.n_mc", "must be >= 10000", at("verify_bounds.n_mc"));
  require(c.bounds.s >= 0.0 && c.bounds.s < 0.5, "verify_bounds.s", "must lie in [0, 1/2)", at("verify_bounds.s"));
  require(c.bounds.h > 0.0, "verify_bounds.h", "must be positive", at("verify_bounds.h"));
  if (c.sampler) {
    const auto& s = *c.sampler;
    require(s.c > 0.0 && s.c <= 0.01, "sampler.c", "must lie in (0, 0.01]", at("sampler.c"));
    require(s.proposal == "rwm" || s.proposal == "mala", "sampler.proposal", "must be 'rwm' or 'mala'",
            at("sampler.proposal"));
    require(s.alpha > 0.0 && s.alpha < 1.0, "sampler.alpha", "must lie in (0, 1)", at("sampler.alpha"));
    require(s.q_adj > 0.0 && s.q_adj <= 0.5, "sampler.q_adj", "must lie in (0, 1/2]", at("sampler.q_adj"));
    require(!s.h || *s.h > 0.0, "sampler.h", "must be positive", at("sampler.h"));
    require(s.replicas >= 1, "sampler.replicas", "must be >= 1", at("sampler.replicas"));
    require(s.thin >= 1, "sampler.thin", "must be >= 1", at("sampler.thin"));
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    throw ConfigError("", std::string(e.description()), static_cast<int>(e.source().begin.line),
                      static_cast<int>(e.source().begin.column));
  }

  ExperimentConfig c;
  Reader top(root, "");
  top.get("tasks", c.tasks);
  for (const char* block : {"target", "ladder", "sampler", "calibrate", "verify_finite", "verify_bounds", "sweep"}) {
    top.find(block);
  }
  top.finish();

  if (const auto* t = subtable(root, "target")) {
    TargetConfig tc;
    Reader r(*t, "target");
    r.get("potential", tc.potential);
    r.get("dim", tc.dim);
    r.get("curvature", tc.curvature);
    r.get("L", tc.smoothness);
    r.get("m", tc.convexity);
    r.get("weights", tc.weights);
    r.get("modes", tc.modes);
    r.get("mode_rule", tc.mode_rule);
    r.get("components", tc.components);
    r.get("D", tc.displacement);
    r.get("mode_seed", tc.mode_seed);
    r.finish();
    c.target = tc;
  }
  if (const auto* t = subtable(root, "ladder")) {
    Reader r(*t, "ladder");
    r.get("kind", c.ladder.kind);
    r.get("betas", c.ladder.betas);
    r.get("zeta", c.ladder.zeta);
    r.finish();
  }
  if (const auto* t = subtable(root, "sampler")) {
    SamplerConfig s;
    Reader r(*t, "sampler");
    r.get("proposal", s.proposal);
    if (const auto* n = r.find("h")) {
      if (!(n->is_string() && n->as_string()->get() == "auto")) {
        Reader inner(*t, "sampler");
        inner.get("h", s.h);
      }
    }
    r.get("c", s.c);
    r.get("eta", s.eta);
    r.get("epsilon", s.epsilon);
    r.get("alpha", s.alpha);
    r.get("q_adj", s.q_adj);
    r.get("lazy", s.lazy);
    r.get("seed", s.seed);
    r.get("steps", s.steps);
    r.get("thin", s.thin);
    r.get("replicas", s.replicas);
    r.finish();
    c.sampler = s;
  }
  if (const auto* t = subtable(root, "calibrate")) {
    Reader r(*t, "calibrate");
    r.get("per_level_budget", c.calibrate.per_level_budget);
    r.get("verification_steps", c.calibrate.verification_steps);
    r.get("burn_in_fraction", c.calibrate.burn_in_fraction);
    r.get("occupancy_factor", c.calibrate.occupancy_factor);
    r.finish();
  }
  if (const auto* t = subtable(root, "verify_finite")) {
    auto& f = c.finite;
    Reader r(*t, "verify_finite");
    r.get("chains", f.campaign.chains);
    r.get("min_states", f.campaign.min_states);
    r.get("max_states", f.campaign.max_states);
    r.get("min_blocks", f.campaign.min_blocks);
    r.get("max_blocks", f.campaign.max_blocks);
    r.get("s_values", f.campaign.s_values);
    r.get("mirrored", f.campaign.mirrored);
    r.get("random_functions", f.campaign.random_functions);
    r.get("seed", f.campaign.seed);
    r.get("comparison_pairs", f.comparison_pairs);
    r.get("tv_chains", f.tv_chains);
    r.get("tv_horizon", f.tv_horizon);
    r.finish();
  }
  if (const auto* t = subtable(root, "verify_bounds")) {
    Reader r(*t, "verify_bounds");
    r.get("n_points", c.bounds.n_points);
    r.get("n_mc", c.bounds.n_mc);
    r.get("h", c.bounds.h);
    r.get("s", c.bounds.s);
    r.get("seed", c.bounds.seed);
    r.finish();
  }
  if (const auto* t = subtable(root, "sweep")) {
    SweepConfig s;
    Reader r(*t, "sweep");
    r.get("dims", s.dims);
    r.get("D", s.displacements);
    r.get("L", s.smoothness);
    r.get("m", s.convexity);
    r.finish();
    c.sweep = s;
  }
  validate(c, root);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

namespace {

template <class T>
toml::array to_array(const std::vector<T>& v) {
  toml::array a;
  for (const auto& x : v) a.push_back(x);
  return a;
}

}  // namespace

std::string to_toml(const ExperimentConfig& c) {
  toml::table root;
  root.insert("tasks", to_array(c.tasks));
  if (c.target) {
    const auto& t = *c.target;
    toml::table tt;
    tt.insert("potential", t.potential);
    tt.insert("dim", t.dim);
    if (!t.curvature.empty()) tt.insert("curvature", to_array(t.curvature));
    if (t.smoothness) tt.insert("L", *t.smoothness);
    if (t.convexity) tt.insert("m", *t.convexity);
    if (!t.weights.empty()) tt.insert("weights", to_array(t.weights));
    if (!t.modes.empty()) {
      toml::array rows;
      for (const auto& m : t.modes) rows.push_back(to_array(m));
      tt.insert("modes", rows);
    }
    if (!t.mode_rule.empty()) tt.insert("mode_rule", t.mode_rule);
    tt.insert("components", t.components);
    tt.insert("D", t.displacement);
    tt.insert("mode_seed", static_cast<std::int64_t>(t.mode_seed));
    root.insert("target", tt);
  }
  {
    toml::table lt;
    lt.insert("kind", c.ladder.kind);
    if (!c.ladder.betas.empty()) lt.insert("betas", to_array(c.ladder.betas));
    if (!c.ladder.zeta.empty()) lt.insert("zeta", to_array(c.ladder.zeta));
    root.insert("ladder", lt);
  }
  if (c.sampler) {
    const auto& s = *c.sampler;
    toml::table st;
    st.insert("proposal", s.proposal);
    if (s.h) {
      st.insert("h", *s.h);
    } else {
      st.insert("h", "auto");
    }
    st.insert("c", s.c);
    st.insert("eta", s.eta);
    st.insert("epsilon", s.epsilon);
    st.insert("alpha", s.alpha);
    st.insert("q_adj", s.q_adj);
    st.insert("lazy", s.lazy);
    st.insert("seed", static_cast<std::int64_t>(s.seed));
    st.insert("steps", static_cast<std::int64_t>(s.steps));
    st.insert("thin", static_cast<std::int64_t>(s.thin));
    st.insert("replicas", s.replicas);
    root.insert("sampler", st);
  }
  {
    toml::table ct;
    ct.insert("per_level_budget", static_cast<std::int64_t>(c.calibrate.per_level_budget));
    ct.insert("verification_steps", static_cast<std::int64_t>(c.calibrate.verification_steps));
    ct.insert("burn_in_fraction", c.calibrate.burn_in_fraction);
    ct.insert("occupancy_factor", c.calibrate.occupancy_factor);
    root.insert("calibrate", ct);
  }
  {
    const auto& f = c.finite;
    toml::table ft;
    ft.insert("chains", f.campaign.chains);
    ft.insert("min_states", f.campaign.min_states);
    ft.insert("max_states", f.campaign.max_states);
    ft.insert("min_blocks", f.campaign.min_blocks);
    ft.insert("max_blocks", f.campaign.max_blocks);
    ft.insert("s_values", to_array(f.campaign.s_values));
    ft.insert("mirrored", f.campaign.mirrored);
    ft.insert("random_functions", f.campaign.random_functions);
    ft.insert("seed", static_cast<std::int64_t>(f.campaign.seed));
    ft.insert("comparison_pairs", f.comparison_pairs);
    ft.insert("tv_chains", f.tv_chains);
    ft.insert("tv_horizon", f.tv_horizon);
    root.insert("verify_finite", ft);
  }
  {
    toml::table bt;
    bt.insert("n_points", static_cast<std::int64_t>(c.bounds.n_points));
    bt.insert("n_mc", static_cast<std::int64_t>(c.bounds.n_mc));
    bt.insert("h", c.bounds.h);
    bt.insert("s", c.bounds.s);
    bt.insert("seed", static_cast<std::int64_t>(c.bounds.seed));
    root.insert("verify_bounds", bt);
  }
  if (c.sweep) {
    toml::table wt;
    wt.insert("dims", to_array(c.sweep->dims));
    wt.insert("D", to_array(c.sweep->displacements));
    wt.insert("L", c.sweep->smoothness);
    wt.insert("m", c.sweep->convexity);
    root.insert("sweep", wt);
  }
  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

MixtureSpec build_spec(const TargetConfig& t) {
  try {
    LocalPotential local = t.potential == "diagonal"
                               ? LocalPotential::diagonal_quadratic(Eigen::Map<const Vector>(t.curvature.data(),
                                                                                            static_cast<Eigen::Index>(t.curvature.size())),
                                                                    t.smoothness, t.convexity)
                           : t.smoothness || t.convexity
                               ? LocalPotential::diagonal_quadratic(Vector::Ones(t.dim), t.smoothness, t.convexity)
                               : LocalPotential::isotropic_quadratic(t.dim);
    std::vector<Vector> modes;
    if (!t.modes.empty()) {
      for (const auto& m : t.modes) {
        if (static_cast<int>(m.size()) != t.dim) throw ConfigError("target.modes", "each mode needs dim entries");
        modes.push_back(Eigen::Map<const Vector>(m.data(), t.dim));
      }
    } else if (t.mode_rule == "antipodal") {
      Vector e = Vector::Zero(t.dim);
      e(0) = t.displacement;
      modes = {e, -e};
    } else {
      Rng rng(t.mode_seed, 0x6d6f646573ULL);
      for (int j = 0; j < t.components; ++j) {
        Vector v = rng.normal_vector(t.dim);
        modes.push_back(t.displacement * v / v.norm());
      }
    }
    std::vector<double> w = t.weights;
    if (w.empty()) w.assign(modes.size(), 1.0 / static_cast<double>(modes.size()));
    return MixtureSpec(w, modes, local);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("target", e.what());
  }
}

Ladder build_configured_ladder(const ExperimentConfig& c, const MixtureSpec& spec) {
  try {
    Ladder ladder = c.ladder.kind == "explicit"
                        ? Ladder(c.ladder.betas)
                        : build_ladder(spec.local().smoothness(), spec.local().convexity(), spec.dimension(),
                                       spec.max_displacement());
    if (!c.ladder.zeta.empty()) ladder.set_log_weights(c.ladder.zeta);
    return ladder;
  } catch (const Error& e) {
    throw ConfigError("ladder", e.what());
  }
}

}  // namespace stemper
