#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace stemper {

enum class Verdict { Pass, Fail, Warn, Skipped };

std::string to_string(Verdict v);

/// One checked inequality in the form lhs <= rhs. margin = rhs - lhs.
struct InequalityRecord {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  std::size_t samples = 1;
  Verdict verdict = Verdict::Pass;
  std::string note;
};

/// Absolute slack allowed on every inequality check.
inline constexpr double kInequalitySlack = 1e-9;

/// Builds a record for lhs <= rhs (+inf on the right always passes).
/// When `hard` is false a violation becomes a warning.
InequalityRecord check_leq(std::string name, double lhs, double rhs, bool hard = true,
                           double slack = kInequalitySlack);

struct BoundReport {
  std::string name;
  std::vector<InequalityRecord> records;

  void add(InequalityRecord r) { records.push_back(std::move(r)); }
  bool passed() const;
  std::size_t count(Verdict v) const;
  /// Smallest margin per record name, in first-seen order.
  std::vector<InequalityRecord> tightest() const;
};

}  // namespace stemper
