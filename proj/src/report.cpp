#include "stemper/report.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace stemper {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Warn: return "warn";
    case Verdict::Skipped: return "skipped";
  }
  return "fail";
}

InequalityRecord check_leq(std::string name, double lhs, double rhs, bool hard, double slack) {
  InequalityRecord r;
  r.name = std::move(name);
  r.lhs = lhs;
  r.rhs = rhs;
  const double inf = std::numeric_limits<double>::infinity();
  if (rhs == inf) {
    r.margin = lhs == inf ? 0.0 : inf;
  } else {
    r.margin = rhs - lhs;
  }
  bool ok = !std::isnan(lhs) && !std::isnan(rhs) && (rhs == inf || lhs <= rhs + slack);
  r.verdict = ok ? Verdict::Pass : (hard ? Verdict::Fail : Verdict::Warn);
  return r;
}

bool BoundReport::passed() const { return count(Verdict::Fail) == 0; }

std::size_t BoundReport::count(Verdict v) const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.verdict == v;
  return n;
}

std::vector<InequalityRecord> BoundReport::tightest() const {
  std::vector<InequalityRecord> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : records) {
    auto it = index.find(r.name);
    if (it == index.end()) {
      index.emplace(r.name, out.size());
      out.push_back(r);
      continue;
    }
    auto& best = out[it->second];
    const std::size_t seen = best.samples + r.samples;
    if (r.margin < best.margin || (r.verdict == Verdict::Fail && best.verdict != Verdict::Fail)) best = r;
    best.samples = seen;
  }
  return out;
}

}  // namespace stemper
