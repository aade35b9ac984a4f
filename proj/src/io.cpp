#include "stemper/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "stemper/errors.hpp"

namespace stemper::io {

Json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

namespace {

Json numbers(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

}  // namespace

Json to_json(const InequalityRecord& r) {
  Json j;
  j["name"] = r.name;
  j["lhs"] = number(r.lhs);
  j["rhs"] = number(r.rhs);
  j["margin"] = number(r.margin);
  j["samples"] = r.samples;
  j["verdict"] = to_string(r.verdict);
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

Json to_json(const BoundReport& r) {
  Json j;
  j["name"] = r.name;
  j["passed"] = r.passed();
  j["failures"] = r.count(Verdict::Fail);
  j["warnings"] = r.count(Verdict::Warn);
  Json recs = Json::array();
  for (const auto& x : r.records) recs.push_back(to_json(x));
  j["records"] = std::move(recs);
  return j;
}

Json to_json(const ChainSummary& s) {
  Json j;
  j["steps"] = s.steps;
  j["occupancy"] = numbers(s.occupancy);
  j["swap_attempts"] = s.swap_attempts;
  j["swap_accepts"] = s.swap_accepts;
  j["swap_acceptance"] = numbers(s.swap_acceptance());
  j["x_moves"] = s.x_moves;
  j["x_accepts"] = s.x_accepts;
  j["lazy_holds"] = s.lazy_holds;
  j["numerical_rejects"] = s.numerical_rejects;
  j["label_resamples"] = s.label_resamples;
  j["mode_traversals"] = s.mode_traversals;
  return j;
}

Json to_json(const TraceRecord& r) {
  Json j;
  j["step"] = r.step;
  j["level"] = r.level;
  j["label"] = r.label_nearest;
  j["x1"] = number(r.x1);
  j["move"] = to_string(r.move);
  j["accepted"] = r.accepted;
  j["lazy_hold"] = r.lazy_hold;
  j["numerical_reject"] = r.numerical_reject;
  return j;
}

Json to_json(const CalibrationReport& r) {
  Json j;
  j["success"] = r.success;
  j["zeta"] = numbers(r.zeta);
  j["occupancy"] = numbers(r.occupancy);
  Json est = Json::array();
  for (const auto& e : r.ratio_estimates) {
    est.push_back({{"log_ratio", number(e.log_ratio)},
                   {"log_std_error", number(e.log_std_error)},
                   {"ratio", number(e.ratio)},
                   {"std_error", number(e.std_error)},
                   {"samples", e.samples}});
  }
  j["ratio_estimates"] = std::move(est);
  j["budget_used"] = r.budget_used;
  j["offending_levels"] = r.offending_levels;
  return j;
}

Json to_json(const CampaignReport& r) {
  Json j;
  j["passed"] = r.passed();
  j["chains"] = r.chains;
  j["checks"] = r.checks;
  j["failures"] = r.failures;
  j["warnings"] = r.warnings;
  j["hypothesis_met"] = r.hypothesis_met;
  Json t = Json::array();
  for (const auto& x : r.tightest) t.push_back(to_json(x));
  j["tightest"] = std::move(t);
  Json f = Json::array();
  for (const auto& x : r.failed) f.push_back(to_json(x));
  j["failed"] = std::move(f);
  return j;
}

Json to_json(const ProjectedEstimate& e) {
  Json j;
  j["levels"] = e.levels;
  j["labels"] = e.labels;
  j["n_mc"] = e.n_mc;
  j["gap"] = number(e.gap);
  j["gap_lower"] = number(e.gap_lower);
  j["canonical_path_bound"] = number(e.canonical);
  j["lemma_bound"] = number(e.bound);
  j["hellinger"] = number(e.hellinger);
  j["delta"] = number(e.delta);
  j["r_tilde"] = number(e.r_tilde);
  j["r_min"] = number(e.r_min);
  Json rows = Json::array(), ses = Json::array();
  for (int a = 0; a < e.matrix.rows(); ++a) {
    Json row = Json::array(), se = Json::array();
    for (int b = 0; b < e.matrix.cols(); ++b) {
      row.push_back(number(e.matrix(a, b)));
      se.push_back(number(e.std_error(a, b)));
    }
    rows.push_back(std::move(row));
    ses.push_back(std::move(se));
  }
  j["matrix"] = std::move(rows);
  j["std_error"] = std::move(ses);
  j["report"] = to_json(e.report);
  return j;
}

Json to_json(const CounterexampleReport& r) {
  Json j;
  j["flow_bound"] = number(r.flow_bound);
  j["ratio_bound"] = number(r.ratio_bound);
  j["numerator"] = number(r.numerator);
  j["flow_lower"] = number(r.flow_lower);
  j["flow_upper"] = number(r.flow_upper);
  j["flow_se"] = number(r.flow_se);
  j["report"] = to_json(r.report);
  return j;
}

Json to_json(const MarginalFit& f) {
  Json j;
  j["passed"] = f.passed();
  j["ks_statistic"] = numbers(f.ks_statistic);
  j["p_value"] = numbers(f.p_value);
  j["iat"] = numbers(f.iat);
  j["effective"] = f.effective;
  j["occupancy"] = numbers(f.occupancy);
  return j;
}

Json to_json(const DesignReport& r) {
  Json j;
  j["T"] = r.levels;
  j["beta1"] = number(r.beta1);
  j["ratio"] = number(r.ratio);
  j["hellinger_floor"] = number(r.overlap.hellinger_floor);
  j["kl_ceiling"] = number(r.overlap.kl_ceiling);
  j["overlap_margin"] = number(r.overlap.overlap_margin);
  j["ceiling_margin"] = number(r.overlap.ceiling_margin);
  j["claimed_margin"] = number(r.overlap.claimed_margin);
  j["rwm_h"] = number(r.steps.rwm_h);
  j["mala_h"] = number(r.steps.mala_h);
  j["tau"] = number(r.steps.tau);
  j["R"] = number(r.steps.radius);
  return j;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace stemper::io
