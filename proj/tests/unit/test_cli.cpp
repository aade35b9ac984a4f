#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stemper/config.hpp"
#include "stemper/experiment.hpp"
#include "stemper/io.hpp"

using namespace stemper;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("stemper_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kRich = R"(tasks = ["calibrate", "sample", "verify-bounds"]

[target]
potential = "diagonal"
dim = 3
curvature = [1.0, 2.0, 0.5]
L = 3.0
m = 0.25
weights = [0.3, 0.7]
modes = [[1.0, 0.0, -2.0], [-1.5, 0.5, 0.0]]

[ladder]
kind = "explicit"
betas = [0.1, 0.3, 1.0]
zeta = [0.0, -0.5, -1.25]

[sampler]
proposal = "mala"
h = 0.125
alpha = 0.4
q_adj = 0.25
lazy = false
seed = 99
steps = 12345
thin = 3
replicas = 4
)";

ExperimentConfig quiet_sample(std::uint64_t seed) {
  auto c = parse_config(R"(tasks = ["sample"]
[target]
dim = 2
mode_rule = "antipodal"
D = 3
[sampler]
steps = 3000
replicas = 2
)");
  c.sampler->seed = seed;
  return c;
}

}  // namespace

TEST_CASE("config round trip preserves every setting") {
  const auto c = parse_config(kRich);
  const auto text = to_toml(c);
  const auto back = parse_config(text);
  CHECK(to_toml(back) == text);
  REQUIRE(back.target);
  CHECK(back.tasks == c.tasks);
  CHECK(back.target->potential == "diagonal");
  CHECK(back.target->curvature == std::vector<double>{1.0, 2.0, 0.5});
  CHECK(*back.target->smoothness == 3.0);
  CHECK(*back.target->convexity == 0.25);
  CHECK(back.target->modes == c.target->modes);
  CHECK(back.target->weights == c.target->weights);
  CHECK(back.ladder.betas == c.ladder.betas);
  CHECK(back.ladder.zeta == c.ladder.zeta);
  REQUIRE(back.sampler);
  CHECK(back.sampler->proposal == "mala");
  CHECK(*back.sampler->h == 0.125);
  CHECK(back.sampler->alpha == 0.4);
  CHECK(back.sampler->q_adj == 0.25);
  CHECK(!back.sampler->lazy);
  CHECK(back.sampler->seed == 99);
  CHECK(back.sampler->steps == 12345);
  CHECK(back.sampler->thin == 3);
  CHECK(back.sampler->replicas == 4);

  // "auto" survives as an unset step size.
  const auto a = parse_config("tasks = []\n[sampler]\nh = \"auto\"\n");
  CHECK(!a.sampler->h);
  CHECK(!parse_config(to_toml(a)).sampler->h);

  const auto spec = build_spec(*c.target);
  CHECK(spec.components() == 2);
  CHECK(spec.local().smoothness() == 3.0);
  CHECK(build_configured_ladder(c, spec).size() == 3);
}

TEST_CASE("config errors carry line and field") {
  auto error_of = [](const std::string& text) -> ConfigError {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return e;
    }
    FAIL("expected a ConfigError");
    return ConfigError("", "");
  };

  const auto syntax = error_of("tasks = []\n[target]\ndim = = 2\n");
  CHECK(syntax.line() == 3);

  const auto unknown = error_of("tasks = []\n\n[sampler]\nsteps = 10\nstep = 10\n");
  CHECK(unknown.line() == 5);
  CHECK(unknown.field() == "sampler.step");

  const auto betas = error_of("tasks = []\n[ladder]\nkind = \"explicit\"\nbetas = [0.5, 0.9]\n");
  CHECK(betas.field() == "ladder.betas");
  CHECK(betas.line() == 4);
  CHECK(error_of("tasks = []\n[ladder]\nkind = \"explicit\"\nbetas = [0.5, 0.5, 1.0]\n").field() == "ladder.betas");

  CHECK(error_of("tasks = [\"sample\"]\n[target]\nmode_rule = \"antipodal\"\n").field() == "sampler");
  CHECK(error_of("tasks = [\"sweep\"]\n").field() == "sweep");
  CHECK(error_of("tasks = [\"nope\"]\n").field() == "tasks");
  CHECK(error_of("tasks = []\n[sampler]\nq_adj = 0.75\n").field() == "sampler.q_adj");
  CHECK(error_of("tasks = []\n[target]\ndim = \"two\"\n").field() == "target.dim");
  CHECK(error_of("tasks = []\n[target]\ndim = 2\n").field() == "target.mode_rule");

  const auto dir = scratch("bad");
  fs::create_directories(dir);
  const auto path = dir / "bad.toml";
  std::ofstream(path) << "tasks = []\n[sampler]\nalpha = 2.0\n";
  std::ostringstream log, err;
  CHECK(run_experiment_file(path.string(), dir / "out", {}, log, err) == 2);
  CHECK(err.str().find(":3:") != std::string::npos);
  CHECK(err.str().find("sampler.alpha") != std::string::npos);
  CHECK(run_experiment_file((dir / "missing.toml").string(), dir / "out", {}, log, err) == 2);
}

TEST_CASE("empty task list writes only the manifest") {
  const auto dir = scratch("empty");
  std::ostringstream log;
  const auto r = run_experiment(parse_config("tasks = []\n"), dir, {.quiet = true}, log);
  CHECK(r.status == 0);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  CHECK(names == std::vector<std::string>{"manifest.json"});
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(m["files"].empty());
  CHECK(m["status"] == 0);
}

TEST_CASE("sampling is deterministic given the seed") {
  const auto a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
  std::ostringstream log;
  run_experiment(quiet_sample(5), a, {.quiet = true}, log);
  run_experiment(quiet_sample(5), b, {.quiet = true}, log);
  run_experiment(quiet_sample(5), c, {.seed = 6, .quiet = true}, log);
  for (const char* f : {"trace_r0.jsonl", "trace_r1.jsonl", "sample_summary.json"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "trace_r0.jsonl") != slurp(a / "trace_r1.jsonl"));
  CHECK(slurp(a / "trace_r0.jsonl") != slurp(c / "trace_r0.jsonl"));
  // Trace lines are standalone JSON records covering every step.
  std::istringstream lines(slurp(a / "trace_r0.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto rec = nlohmann::json::parse(line);
    CHECK(rec["step"] == n);
    ++n;
  }
  CHECK(n == 3001);

  const auto d = scratch("det_d");
  run_experiment(quiet_sample(5), d, {.replicas = 3, .quiet = true}, log);
  CHECK(fs::exists(d / "trace_r2.jsonl"));
  CHECK(slurp(a / "trace_r0.jsonl") == slurp(d / "trace_r0.jsonl"));
}

TEST_CASE("manifest lists each output once with its digest") {
  const auto dir = scratch("manifest");
  std::ostringstream log;
  auto cfg = quiet_sample(1);
  cfg.tasks.push_back("sweep");
  cfg.sweep = SweepConfig{.dims = {1, 3}, .displacements = {2.0}};
  const auto r = run_experiment(cfg, dir, {.quiet = true}, log);
  CHECK(r.status == 0);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  std::set<std::string> listed;
  for (const auto& f : m["files"]) {
    const std::string name = f["file"];
    CHECK(listed.insert(name).second);
    CHECK(f["sha256"] == io::sha256_file(dir / name));
    CHECK(f["wall_time_s"].get<double>() >= 0.0);
  }
  std::set<std::string> on_disk;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename() != "manifest.json") on_disk.insert(e.path().filename().string());
  }
  CHECK(listed == on_disk);
  CHECK(parse_config(m["config"].get<std::string>()).tasks == cfg.tasks);

  const auto csv = slurp(dir / "sweep.csv");
  CHECK(csv.rfind("d,D,beta1,rho,statistic,value\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 6);
}

TEST_CASE("sha256 known vectors") {
  CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(io::number(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(io::number(std::nan("")) == "nan");
}

TEST_CASE("verify-finite with defaults checks at least 1e3 chains") {
  const auto dir = scratch("finite");
  std::ostringstream log;
  const auto r = run_experiment(parse_config("tasks = [\"verify-finite\"]\n"), dir, {.quiet = true}, log);
  CHECK(r.status == 0);
  CHECK(r.failing.empty());
  const auto rep = nlohmann::json::parse(slurp(dir / "finite_decomposition.json"));
  CHECK(rep["chains"].get<int>() >= 1000);
  CHECK(rep["failures"] == 0);
  CHECK(rep["passed"] == true);
}

TEST_CASE("failing reports give status 1") {
  // An occupancy factor of ~1 demands exactly uniform occupancy.
  const auto dir = scratch("fail");
  std::ostringstream log, err;
  fs::create_directories(dir);
  std::ofstream(dir / "c.toml") << R"(tasks = ["calibrate"]
[target]
dim = 1
mode_rule = "antipodal"
D = 2
[ladder]
kind = "explicit"
betas = [0.05, 0.2, 1.0]
[sampler]
steps = 1000
[calibrate]
occupancy_factor = 1.0000001
)";
  const int status = run_experiment_file((dir / "c.toml").string(), dir / "out", {.quiet = true}, log, err);
  CHECK(status == 1);
  CHECK(err.str().find("calibrate") != std::string::npos);
}
