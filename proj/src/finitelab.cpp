#include "stemper/finitelab.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "stemper/errors.hpp"

namespace stemper {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

void validate(const FiniteChain& c, double reversibility_tol) {
  const int n = c.size();
  if (n < 1) throw InvalidChain("chain has no states");
  if (c.P.rows() != n || c.P.cols() != n) throw InvalidChain("P must be n x n with n = len(pi)");
  double total = 0.0;
  for (int x = 0; x < n; ++x) {
    if (!(c.pi(x) > 0.0) || !std::isfinite(c.pi(x))) throw InvalidChain("pi must be strictly positive");
    total += c.pi(x);
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidChain("pi must sum to 1");
  for (int x = 0; x < n; ++x) {
    double row = 0.0;
    for (int y = 0; y < n; ++y) {
      if (!(c.P(x, y) >= 0.0) || !std::isfinite(c.P(x, y))) throw InvalidChain("P has a negative or non-finite entry");
      row += c.P(x, y);
    }
    if (std::abs(row - 1.0) > 1e-12) throw InvalidChain("row " + std::to_string(x) + " does not sum to 1");
  }
  for (int x = 0; x < n; ++x) {
    for (int y = x + 1; y < n; ++y) {
      if (std::abs(c.pi(x) * c.P(x, y) - c.pi(y) * c.P(y, x)) > reversibility_tol) {
        throw InvalidChain("detailed balance fails between states " + std::to_string(x) + " and " +
                           std::to_string(y));
      }
    }
  }
}

FiniteChain make_chain(Matrix P, Vector pi) {
  FiniteChain c{std::move(P), std::move(pi)};
  validate(c);
  return c;
}

FiniteChain lazy(const FiniteChain& c) {
  FiniteChain out = c;
  out.P = 0.5 * c.P;
  for (int x = 0; x < c.size(); ++x) out.P(x, x) += 0.5;
  return out;
}

bool is_lazy(const FiniteChain& c) {
  for (int x = 0; x < c.size(); ++x) {
    if (c.P(x, x) < 0.5 - 1e-12) return false;
  }
  return true;
}

Matrix flux(const FiniteChain& c) { return c.pi.asDiagonal() * c.P; }

double dirichlet_form(const FiniteChain& c, const Vector& g) {
  double acc = 0.0;
  for (int x = 0; x < c.size(); ++x) {
    for (int y = 0; y < c.size(); ++y) {
      const double dg = g(y) - g(x);
      acc += dg * dg * c.pi(x) * c.P(x, y);
    }
  }
  return 0.5 * acc;
}

double stationary_variance(const FiniteChain& c, const Vector& g) {
  const double m = c.pi.dot(g);
  return c.pi.dot((g.array() - m).square().matrix());
}

double spectral_gap(const FiniteChain& c) {
  validate(c);
  const int n = c.size();
  if (n == 1) return kInf;
  const Vector s = c.pi.cwiseSqrt();
  Matrix S = s.asDiagonal() * c.P * s.cwiseInverse().asDiagonal();
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("eigen decomposition failed", 0.0);
  return 1.0 - eig.eigenvalues()(n - 2);
}

ConductanceSearch s_conductance_search(const FiniteChain& c, double s) {
  if (!(s >= 0.0 && s < 0.5)) throw InvalidArgument("s must lie in [0, 1/2)");
  const int n = c.size();
  if (n > kMaxEnumerationStates) throw SizeLimit("s-conductance enumeration is capped at 22 states");
  const Matrix M = flux(c);

  ConductanceSearch best;
  best.value = kInf;
  std::vector<char> in(static_cast<std::size_t>(n), 0);
  double mass = 0.0, flow = 0.0;
  std::uint32_t mask = 0;

  auto recompute = [&] {
    mass = 0.0;
    flow = 0.0;
    for (int x = 0; x < n; ++x) {
      if (!in[static_cast<std::size_t>(x)]) continue;
      mass += c.pi(x);
      for (int y = 0; y < n; ++y) {
        if (!in[static_cast<std::size_t>(y)]) flow += M(x, y);
      }
    }
  };

  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t k = 1; k < total; ++k) {
    const int v = std::countr_zero(k);
    const bool adding = !in[static_cast<std::size_t>(v)];
    // Flow change from v relative to A \ {v}.
    in[static_cast<std::size_t>(v)] = 0;
    double out = 0.0, inc = 0.0;
    for (int y = 0; y < n; ++y) {
      if (y == v) continue;
      if (in[static_cast<std::size_t>(y)]) {
        inc += M(y, v);
      } else {
        out += M(v, y);
      }
    }
    const double delta = out - inc;
    if (adding) {
      in[static_cast<std::size_t>(v)] = 1;
      flow += delta;
      mass += c.pi(v);
    } else {
      flow -= delta;
      mass -= c.pi(v);
    }
    mask ^= std::uint32_t{1} << v;
    if ((k & 0xFFF) == 0) recompute();

    if (mass > s && mass <= 0.5 + kHalfMassTol) {
      ++best.admissible;
      const double value = std::max(flow, 0.0) / (mass - s);
      if (value < best.value) {
        best.value = value;
        best.argmin = mask;
      }
    }
  }
  return best;
}

double s_conductance_exact(const FiniteChain& c, double s) { return s_conductance_search(c, s).value; }

bool has_half_mass_set(const FiniteChain& c) {
  const int n = c.size();
  if (n > kMaxEnumerationStates) throw SizeLimit("half-mass search is capped at 22 states");
  const std::uint64_t total = std::uint64_t{1} << n;
  double mass = 0.0;
  std::vector<char> in(static_cast<std::size_t>(n), 0);
  for (std::uint64_t k = 1; k < total; ++k) {
    const int v = std::countr_zero(k);
    in[static_cast<std::size_t>(v)] ^= 1;
    mass += in[static_cast<std::size_t>(v)] ? c.pi(v) : -c.pi(v);
    if ((k & 0xFFF) == 0) {
      mass = 0.0;
      for (int x = 0; x < n; ++x) {
        if (in[static_cast<std::size_t>(x)]) mass += c.pi(x);
      }
    }
    if (std::abs(mass - 0.5) <= kHalfMassTol) return true;
  }
  return false;
}

Partition Partition::from_labels(std::vector<int> labels) {
  Partition p;
  p.labels = std::move(labels);
  int maxb = -1;
  for (int b : p.labels) {
    if (b < 0) throw InvalidPartition("block labels must be nonnegative");
    maxb = std::max(maxb, b);
  }
  p.blocks = maxb + 1;
  std::vector<int> sizes(static_cast<std::size_t>(p.blocks), 0);
  for (int b : p.labels) ++sizes[static_cast<std::size_t>(b)];
  for (int k = 0; k < p.blocks; ++k) {
    if (sizes[static_cast<std::size_t>(k)] == 0) throw InvalidPartition("block " + std::to_string(k) + " is empty");
  }
  return p;
}

std::vector<std::vector<int>> Partition::members() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(blocks));
  for (std::size_t x = 0; x < labels.size(); ++x) out[static_cast<std::size_t>(labels[x])].push_back(static_cast<int>(x));
  return out;
}

Decomposition decompose(const FiniteChain& c, const Partition& part) {
  if (static_cast<int>(part.labels.size()) != c.size()) throw InvalidPartition("partition size differs from chain");
  const auto checked = Partition::from_labels(part.labels);
  Decomposition d;
  d.members = checked.members();
  const int B = checked.blocks;

  for (const auto& block : d.members) {
    const int m = static_cast<int>(block.size());
    Matrix Pk = Matrix::Zero(m, m);
    Vector pk(m);
    double mass = 0.0;
    for (int a = 0; a < m; ++a) mass += c.pi(block[static_cast<std::size_t>(a)]);
    for (int a = 0; a < m; ++a) {
      const int x = block[static_cast<std::size_t>(a)];
      pk(a) = c.pi(x) / mass;
      double stay = 1.0;
      for (int b = 0; b < m; ++b) {
        if (a == b) continue;
        Pk(a, b) = c.P(x, block[static_cast<std::size_t>(b)]);
        stay -= Pk(a, b);
      }
      Pk(a, a) = std::max(stay, 0.0);  // escapes become holds
    }
    pk /= pk.sum();
    d.restricted.push_back(make_chain(std::move(Pk), std::move(pk)));
  }

  Matrix Pbar = Matrix::Zero(B, B);
  Vector pibar = Vector::Zero(B);
  const Matrix M = flux(c);
  for (int x = 0; x < c.size(); ++x) {
    pibar(checked.labels[static_cast<std::size_t>(x)]) += c.pi(x);
    for (int y = 0; y < c.size(); ++y) {
      Pbar(checked.labels[static_cast<std::size_t>(x)], checked.labels[static_cast<std::size_t>(y)]) += M(x, y);
    }
  }
  for (int k = 0; k < B; ++k) {
    Pbar.row(k) /= pibar(k);
    double off = 0.0;
    for (int l = 0; l < B; ++l) off += l == k ? 0.0 : Pbar(k, l);
    Pbar(k, k) = 1.0 - off;
  }
  d.projected = make_chain(std::move(Pbar), std::move(pibar));
  return d;
}

Matrix block_dirichlet_terms(const FiniteChain& c, const Partition& part, const Vector& g) {
  Matrix E = Matrix::Zero(part.blocks, part.blocks);
  for (int x = 0; x < c.size(); ++x) {
    for (int y = 0; y < c.size(); ++y) {
      const double dg = g(y) - g(x);
      E(part.labels[static_cast<std::size_t>(x)], part.labels[static_cast<std::size_t>(y)]) += dg * dg * c.pi(x) * c.P(x, y);
    }
  }
  return E;
}

double escape_rate(const FiniteChain& c, const Partition& part) {
  double gamma = 0.0;
  for (int x = 0; x < c.size(); ++x) {
    double esc = 0.0;
    for (int y = 0; y < c.size(); ++y) {
      if (part.labels[static_cast<std::size_t>(y)] != part.labels[static_cast<std::size_t>(x)]) esc += c.P(x, y);
    }
    gamma = std::max(gamma, esc);
  }
  return gamma;
}

DecompositionReport decomposition_check(const FiniteChain& c, const Partition& part,
                                        const DecompositionOptions& options, Rng& rng) {
  const Decomposition d = decompose(c, part);
  const Partition p = Partition::from_labels(part.labels);
  DecompositionReport out;
  out.report.name = "decomposition";
  const int B = p.blocks;
  if (B < 2) {
    InequalityRecord skip;
    skip.name = "decomposition";
    skip.verdict = Verdict::Skipped;
    skip.note = "single block: projected chain has no spectral gap";
    out.report.add(skip);
    return out;
  }

  const double lam = spectral_gap(c);
  const double lam_bar = spectral_gap(d.projected);
  const double gamma = escape_rate(c, p);
  out.projected_gap = lam_bar;
  out.gamma = gamma;

  // Singleton blocks have no non-constant functions; their gap is taken as 1.
  double min_lam_k = kInf;
  bool restricted_half_mass = true;
  for (const auto& r : d.restricted) {
    min_lam_k = std::min(min_lam_k, r.size() == 1 ? 1.0 : spectral_gap(r));
    restricted_half_mass = restricted_half_mass && r.size() > 1 && has_half_mass_set(r);
  }
  out.theorem_hypothesis_met = lam_bar <= 1.0 + 1e-12 && has_half_mass_set(c) && restricted_half_mass;

  out.report.add(check_leq("gap-decomposition", 0.5 * lam_bar * min_lam_k, lam));

  auto psi = [&](double t) {
    double v = kInf;
    for (const auto& r : d.restricted) v = std::min(v, r.size() == 1 ? kInf : s_conductance_exact(r, t));
    return v;
  };

  for (double s : options.s_values) {
    const double phi = s_conductance_exact(c, s);
    const std::string tag = "(s=" + std::to_string(s).substr(0, 4) + ")";

    const double st = lam_bar * s / 8.0;
    const double psi_t = psi(st);
    const double thm = lam_bar == 0.0 ? 0.0 : lam_bar / 8.0 * psi_t;
    auto rec = check_leq("s-conductance-decomposition", thm, phi, out.theorem_hypothesis_met);
    if (!out.theorem_hypothesis_met) rec.note = "hypothesis unmet " + tag;
    out.report.add(rec);

    const double minform = lam_bar == 0.0 ? 0.0 : std::min(lam_bar / 6.0, lam_bar * psi_t / 8.0);
    out.report.add(check_leq("s-conductance-decomposition-min-form", minform, phi, lam_bar <= 1.0 + 1e-12));

    const double cgen = lam_bar / (6.0 * gamma + 2.0 * lam_bar);
    const double general = lam_bar == 0.0 ? 0.0 : std::min(lam_bar / 6.0, cgen * psi(cgen * s));
    out.report.add(check_leq("s-conductance-decomposition-general", general, phi));
  }

  // Jerrum-type identity and variance inequality on random functions.
  double worst_e = -kInf, e_lhs = 0.0, e_rhs = 0.0;
  InequalityRecord worst_v;
  worst_v.margin = kInf;
  bool have_v = false;
  for (int r = 0; r < options.random_functions; ++r) {
    const Vector g = rng.normal_vector(c.size());
    const Matrix E = block_dirichlet_terms(c, p, g);
    double cross = 0.0;
    for (int k = 0; k < B; ++k) {
      for (int l = 0; l < B; ++l) cross += k == l ? 0.0 : E(k, l);
    }
    double within_e = 0.0, within_v = 0.0;
    for (int k = 0; k < B; ++k) {
      const auto& mem = d.members[static_cast<std::size_t>(k)];
      Vector gk(static_cast<Eigen::Index>(mem.size()));
      for (std::size_t a = 0; a < mem.size(); ++a) gk(static_cast<Eigen::Index>(a)) = g(mem[a]);
      within_e += d.projected.pi(k) * dirichlet_form(d.restricted[static_cast<std::size_t>(k)], gk);
      within_v += d.projected.pi(k) * stationary_variance(d.restricted[static_cast<std::size_t>(k)], gk);
    }
    const double lhs = dirichlet_form(c, g);
    const double rhs = 0.5 * cross + within_e;
    const double gap = std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
    if (gap > worst_e) {
      worst_e = gap;
      e_lhs = lhs;
      e_rhs = rhs;
    }
    if (lam_bar > 0.0) {
      const double v_rhs = 1.5 / lam_bar * cross + (3.0 * gamma / lam_bar + 1.0) * within_v;
      auto rec = check_leq("decomp-V", stationary_variance(c, g), v_rhs);
      if (rec.margin < worst_v.margin) worst_v = rec;
      have_v = true;
    }
  }
  if (options.random_functions > 0) {
    auto e = check_leq("decomp-E", worst_e, 1e-12, true, 0.0);
    e.note = "relative |E_P - decomposition| (E_P = " + std::to_string(e_lhs) + ", rhs = " + std::to_string(e_rhs) + ")";
    e.samples = static_cast<std::size_t>(options.random_functions);
    out.report.add(e);
    if (have_v) {
      worst_v.samples = static_cast<std::size_t>(options.random_functions);
      out.report.add(worst_v);
    } else {
      InequalityRecord v;
      v.name = "decomp-V";
      v.verdict = Verdict::Skipped;
      v.note = "lambda(Pbar) = 0: bound is vacuous";
      out.report.add(v);
    }
  }
  return out;
}

FiniteChain mh_finite(const Vector& target, const Matrix& Q) {
  const int n = static_cast<int>(target.size());
  if (Q.rows() != n || Q.cols() != n) throw InvalidProposal("proposal must be n x n");
  for (int x = 0; x < n; ++x) {
    if (std::abs(Q.row(x).sum() - 1.0) > 1e-12 || Q.row(x).minCoeff() < 0.0) {
      throw InvalidProposal("proposal rows must be probability vectors");
    }
    for (int y = 0; y < n; ++y) {
      if ((Q(x, y) > 0.0) != (Q(y, x) > 0.0)) throw InvalidProposal("proposal support is not symmetric");
    }
  }
  Matrix P = Matrix::Zero(n, n);
  for (int x = 0; x < n; ++x) {
    double stay = 1.0;
    for (int y = 0; y < n; ++y) {
      if (x == y || Q(x, y) == 0.0) continue;
      P(x, y) = Q(x, y) * std::min(1.0, target(y) * Q(y, x) / (target(x) * Q(x, y)));
      stay -= P(x, y);
    }
    P(x, x) = std::max(stay, 0.0);
  }
  return make_chain(std::move(P), target);
}

Matrix random_proposal(int n, Rng& rng, double sparsity) {
  if (n < 2) throw InvalidArgument("need at least two states");
  Matrix S = Matrix::Zero(n, n);
  for (int x = 0; x < n; ++x) {
    S(x, x) = rng.uniform();
    for (int y = x + 1; y < n; ++y) {
      if (rng.uniform() < sparsity) continue;
      S(x, y) = rng.uniform();
      S(y, x) = rng.uniform();
    }
  }
  for (int x = 0; x < n; ++x) {
    if (S.row(x).sum() == 0.0) S(x, x) = 1.0;
    S.row(x) /= S.row(x).sum();
  }
  return S;
}

BoundReport comparison_check(const Vector& pi1, const Vector& pi2, const Matrix& Q, const std::vector<double>& s_values) {
  const auto P1 = mh_finite(pi1, Q);
  const auto P2 = mh_finite(pi2, Q);
  const double c = std::min((pi1.array() / pi2.array()).minCoeff(), (pi2.array() / pi1.array()).minCoeff());
  BoundReport rep;
  rep.name = "comparison";
  rep.add(check_leq("comparison-gap", c * c * spectral_gap(P2), spectral_gap(P1)));
  for (double s : s_values) {
    const double phi2 = s_conductance_exact(P2, c * s);
    auto rec = check_leq("comparison-conductance", std::isinf(phi2) ? phi2 : c * c * phi2, s_conductance_exact(P1, s));
    rec.note = "s=" + std::to_string(s) + " c=" + std::to_string(c);
    rep.add(rec);
  }
  return rep;
}

TvCheck tv_mixing_bound_check(const FiniteChain& c, const Vector& nu, int horizon, const std::vector<double>& s_values) {
  validate(c);
  if (!is_lazy(c)) throw InvalidArgument("TV bound needs a lazy chain");
  if (nu.size() != c.size() || nu.minCoeff() < 0.0 || std::abs(nu.sum() - 1.0) > 1e-12) {
    throw InvalidArgument("nu must be a probability vector on the chain's states");
  }
  TvCheck out;
  out.report.name = "tv-rate";
  out.eta = (nu.array() / c.pi.array()).maxCoeff();

  Eigen::RowVectorXd dist = nu.transpose();
  out.tv.reserve(static_cast<std::size_t>(horizon) + 1);
  for (int t = 0; t <= horizon; ++t) {
    out.tv.push_back(0.5 * (dist - c.pi.transpose()).cwiseAbs().sum());
    dist = dist * c.P;
  }

  std::vector<double> sorted = s_values;
  std::sort(sorted.begin(), sorted.end());
  const double lam = spectral_gap(c);
  const bool half = has_half_mass_set(c);
  double prev_phi = -kInf;
  for (double s : sorted) {
    const double phi = s_conductance_exact(c, s);
    InequalityRecord worst;
    worst.margin = kInf;
    for (int t = 0; t <= horizon; ++t) {
      const double bound = out.eta * s + out.eta * std::exp(-t * phi * phi / 2.0);
      auto rec = check_leq("tv-rate", out.tv[static_cast<std::size_t>(t)], bound);
      if (rec.margin < worst.margin) {
        worst = rec;
        worst.note = "t=" + std::to_string(t) + " s=" + std::to_string(s);
      }
    }
    worst.samples = static_cast<std::size_t>(horizon) + 1;
    out.report.add(worst);
    if (half) {
      out.report.add(check_leq("gap-conductance-lower", lam / 2.0, phi));
      out.report.add(check_leq("conductance-upper", phi, 1.0 / (1.0 - 2.0 * s)));
    }
    out.report.add(check_leq("conductance-monotone", prev_phi, phi));
    prev_phi = phi;
  }
  return out;
}

FiniteChain random_reversible_chain(int n, Rng& rng, const RandomChainOptions& options) {
  if (n < 2) throw InvalidArgument("need at least two states");
  if (options.mirrored && n % 2 != 0) throw InvalidArgument("mirrored chains need an even state count");
  Vector pi(n);
  if (options.mirrored) {
    const int h = n / 2;
    for (int x = 0; x < h; ++x) pi(x) = pi(x + h) = rng.gamma(1.0);
  } else {
    for (int x = 0; x < n; ++x) pi(x) = rng.gamma(1.0);
  }
  pi /= pi.sum();

  Matrix S = Matrix::Zero(n, n);
  for (int x = 0; x < n; ++x) {
    for (int y = x + 1; y < n; ++y) {
      const double v = rng.uniform() < options.sparsity ? 0.0 : rng.uniform();
      S(x, y) = S(y, x) = v;
    }
  }
  const double scale = S.rowwise().sum().maxCoeff();
  Matrix P = Matrix::Zero(n, n);
  for (int x = 0; x < n; ++x) {
    double stay = 1.0;
    for (int y = 0; y < n; ++y) {
      if (x == y || scale == 0.0) continue;
      P(x, y) = S(x, y) / scale * std::min(1.0, pi(y) / pi(x));
      stay -= P(x, y);
    }
    P(x, x) = std::max(stay, 0.0);
  }
  FiniteChain c = make_chain(std::move(P), std::move(pi));
  return options.make_lazy ? lazy(c) : c;
}

Partition random_partition(int n, int blocks, Rng& rng, bool mirrored) {
  const int units = mirrored ? n / 2 : n;
  if (mirrored && n % 2 != 0) throw InvalidArgument("mirrored partitions need an even state count");
  if (blocks < 1 || blocks > units) throw InvalidArgument("block count out of range");
  std::vector<int> order(static_cast<std::size_t>(units));
  std::iota(order.begin(), order.end(), 0);
  for (int k = units - 1; k > 0; --k) std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(rng.index(k + 1))]);
  std::vector<int> unit_label(static_cast<std::size_t>(units));
  for (int k = 0; k < units; ++k) {
    unit_label[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k < blocks ? k : rng.index(blocks);
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int x = 0; x < n; ++x) labels[static_cast<std::size_t>(x)] = unit_label[static_cast<std::size_t>(mirrored ? x % units : x)];
  return Partition::from_labels(std::move(labels));
}

void write_chain(std::ostream& out, const FiniteChain& c) {
  const auto old = out.precision(17);
  out << c.size() << '\n';
  for (int x = 0; x < c.size(); ++x) {
    for (int y = 0; y < c.size(); ++y) out << (y ? " " : "") << c.P(x, y);
    out << '\n';
  }
  for (int x = 0; x < c.size(); ++x) out << (x ? " " : "") << c.pi(x);
  out << '\n';
  out.precision(old);
}

FiniteChain read_chain(std::istream& in) {
  int n = 0;
  if (!(in >> n) || n < 1) throw InvalidChain("chain file: expected a positive state count on the first line");
  Matrix P(n, n);
  Vector pi(n);
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) {
      if (!(in >> P(x, y))) throw InvalidChain("chain file: truncated transition matrix at row " + std::to_string(x));
    }
  }
  for (int x = 0; x < n; ++x) {
    if (!(in >> pi(x))) throw InvalidChain("chain file: truncated stationary vector");
  }
  return make_chain(std::move(P), std::move(pi));
}

CampaignReport run_decomposition_campaign(const CampaignOptions& o) {
  CampaignReport rep;
  BoundReport all;
  for (int k = 0; k < o.chains; ++k) {
    Rng rng(o.seed, static_cast<std::uint64_t>(k));
    int n = o.min_states + rng.index(o.max_states - o.min_states + 1);
    if (o.mirrored && n % 2 == 1) n = n == o.max_states ? n - 1 : n + 1;
    const int units = o.mirrored ? n / 2 : n;
    const int hi = std::min(o.max_blocks, units);
    const int blocks = o.min_blocks + rng.index(std::max(1, hi - o.min_blocks + 1));
    const FiniteChain c = random_reversible_chain(n, rng, {.mirrored = o.mirrored, .make_lazy = true});
    const Partition p = random_partition(n, std::min(blocks, units), rng, o.mirrored);
    const auto res = decomposition_check(c, p, {.s_values = o.s_values, .random_functions = o.random_functions}, rng);
    ++rep.chains;
    rep.hypothesis_met += res.theorem_hypothesis_met;
    for (auto r : res.report.records) {
      if (r.verdict == Verdict::Skipped) continue;
      ++rep.checks;
      if (r.verdict == Verdict::Fail) {
        ++rep.failures;
        if (rep.failed.size() < 20) {
          r.note += (r.note.empty() ? "" : "; ") + std::string("chain ") + std::to_string(k);
          rep.failed.push_back(r);
        }
      }
      if (r.verdict == Verdict::Warn) ++rep.warnings;
      all.add(std::move(r));
    }
  }
  rep.tightest = all.tightest();
  return rep;
}

}  // namespace stemper
