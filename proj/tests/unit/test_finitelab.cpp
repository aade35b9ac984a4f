#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "stemper/errors.hpp"
#include "stemper/finitelab.hpp"

using namespace stemper;

namespace {

FiniteChain two_state(double p, double q) {
  Matrix P(2, 2);
  P << 1 - p, p, q, 1 - q;
  Vector pi(2);
  pi << q / (p + q), p / (p + q);
  return make_chain(P, pi);
}

// Plain enumeration in decreasing mask order, flows from scratch.
double brute_conductance(const FiniteChain& c, double s) {
  const int n = c.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = (1u << n) - 1; mask >= 1; --mask) {
    double mass = 0.0, flow = 0.0;
    for (int x = 0; x < n; ++x) {
      if (!(mask >> x & 1u)) continue;
      mass += c.pi(x);
      for (int y = 0; y < n; ++y) {
        if (!(mask >> y & 1u)) flow += c.pi(x) * c.P(x, y);
      }
    }
    if (mass > s && mass <= 0.5 + kHalfMassTol) best = std::min(best, flow / (mass - s));
  }
  return best;
}

FiniteChain permuted(const FiniteChain& c, const std::vector<int>& perm) {
  const int n = c.size();
  Matrix P(n, n);
  Vector pi(n);
  for (int x = 0; x < n; ++x) {
    pi(x) = c.pi(perm[static_cast<std::size_t>(x)]);
    for (int y = 0; y < n; ++y) P(x, y) = c.P(perm[static_cast<std::size_t>(x)], perm[static_cast<std::size_t>(y)]);
  }
  return make_chain(P, pi);
}

}  // namespace

TEST_CASE("validation rejects malformed chains") {
  Matrix P = Matrix::Identity(2, 2);
  Vector pi(2);
  pi << 0.5, 0.5;
  CHECK_NOTHROW(make_chain(P, pi));
  Matrix bad = P;
  bad(0, 0) = 0.9;
  CHECK_THROWS_AS(make_chain(bad, pi), InvalidChain);
  Vector badpi(2);
  badpi << 0.0, 1.0;
  CHECK_THROWS_AS(make_chain(P, badpi), InvalidChain);
  Matrix nonrev(2, 2);
  nonrev << 0.5, 0.5, 0.1, 0.9;
  CHECK_THROWS_AS(make_chain(nonrev, pi), InvalidChain);
}

TEST_CASE("spectral gap: closed forms") {
  CHECK(spectral_gap(two_state(0.3, 0.1)) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(spectral_gap(lazy(two_state(0.3, 0.1))) == doctest::Approx(0.2).epsilon(1e-12));
  Vector pi = Vector::Constant(3, 1.0 / 3);
  CHECK(std::abs(spectral_gap(make_chain(Matrix::Identity(3, 3), pi))) < 1e-12);
  CHECK(std::isinf(spectral_gap(make_chain(Matrix::Ones(1, 1), Vector::Ones(1)))));
}

TEST_CASE("spectral gap is the Rayleigh quotient minimum") {
  Rng rng(11);
  const auto c = random_reversible_chain(8, rng);
  const double gap = spectral_gap(c);
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 10000; ++k) {
    const Vector g = rng.normal_vector(8);
    best = std::min(best, dirichlet_form(c, g) / stationary_variance(c, g));
  }
  CHECK(best >= gap - 1e-12);
  // The eigenvector attains it.
  const Vector s = c.pi.cwiseSqrt();
  Matrix S = s.asDiagonal() * c.P * s.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (S + S.transpose()));
  const Vector g = s.cwiseInverse().asDiagonal() * eig.eigenvectors().col(6);
  CHECK(dirichlet_form(c, g) / stationary_variance(c, g) == doctest::Approx(gap).epsilon(1e-9));
  CHECK(best - gap < 0.5);
}

TEST_CASE("s-conductance: two states and monotonicity") {
  const auto c = two_state(0.3, 0.1);  // pi = (1/4, 3/4)
  CHECK(s_conductance_exact(c, 0.0) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(s_conductance_exact(c, 0.1) == doctest::Approx(0.25 * 0.3 / 0.15).epsilon(1e-14));
  CHECK(std::isinf(s_conductance_exact(c, 0.3)));
  CHECK_THROWS_AS(s_conductance_exact(c, 0.5), InvalidArgument);

  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const auto r = random_reversible_chain(9, rng);
    double prev = 0.0;
    for (double s : {0.0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.45}) {
      const double phi = s_conductance_exact(r, s);
      CHECK(phi >= prev);
      prev = phi;
    }
  }
}

TEST_CASE("s-conductance matches an independent enumeration") {
  Rng rng(5);
  for (int rep = 0; rep < 30; ++rep) {
    const int n = 3 + rep % 10;
    const auto c = random_reversible_chain(n, rng, {.mirrored = false, .make_lazy = rep % 2 == 0, .sparsity = 0.3});
    for (double s : {0.0, 0.05, 0.2}) {
      const double a = s_conductance_exact(c, s), b = brute_conductance(c, s);
      if (std::isinf(b)) {
        CHECK(std::isinf(a));
      } else {
        CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, b));
      }
    }
  }
}

TEST_CASE("incremental flows stay exact over long enumerations") {
  Rng rng(6);
  const auto c = random_reversible_chain(17, rng);
  const auto found = s_conductance_search(c, 0.05);
  double mass = 0.0, flow = 0.0;
  for (int x = 0; x < 17; ++x) {
    if (!(found.argmin >> x & 1u)) continue;
    mass += c.pi(x);
    for (int y = 0; y < 17; ++y) {
      if (!(found.argmin >> y & 1u)) flow += c.pi(x) * c.P(x, y);
    }
  }
  CHECK(found.value == doctest::Approx(flow / (mass - 0.05)).epsilon(1e-12));
  CHECK(found.admissible > 0);
}

TEST_CASE("laziness halves gap and conductance") {
  Rng rng(7);
  const auto c = random_reversible_chain(7, rng, {.make_lazy = false});
  const auto l = lazy(c);
  CHECK(is_lazy(l));
  CHECK(spectral_gap(l) == doctest::Approx(spectral_gap(c) / 2).epsilon(1e-10));
  for (double s : {0.0, 0.1}) {
    CHECK(s_conductance_exact(l, s) == doctest::Approx(s_conductance_exact(c, s) / 2).epsilon(1e-12));
  }
}

TEST_CASE("relabelling states leaves gap and conductance unchanged") {
  Rng rng(8);
  const auto c = random_reversible_chain(9, rng);
  std::vector<int> perm{4, 2, 8, 0, 6, 1, 7, 3, 5};
  const auto p = permuted(c, perm);
  CHECK(spectral_gap(p) == doctest::Approx(spectral_gap(c)).epsilon(1e-10));
  CHECK(s_conductance_exact(p, 0.05) == doctest::Approx(s_conductance_exact(c, 0.05)).epsilon(1e-12));
}

TEST_CASE("decomposition: restricted and projected chains") {
  Rng rng(9);
  const auto c = random_reversible_chain(12, rng);
  const auto part = random_partition(12, 3, rng);
  const auto d = decompose(c, part);
  REQUIRE(d.restricted.size() == 3);
  // Projected pi is block mass; projected chain is stationary.
  Vector mass = Vector::Zero(3);
  for (int x = 0; x < 12; ++x) mass(part.labels[static_cast<std::size_t>(x)]) += c.pi(x);
  CHECK((d.projected.pi - mass).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(((d.projected.pi.transpose() * d.projected.P).transpose() - d.projected.pi).cwiseAbs().maxCoeff() < 1e-14);
  for (const auto& r : d.restricted) {
    CHECK(((r.pi.transpose() * r.P).transpose() - r.pi).cwiseAbs().maxCoeff() < 1e-14);
  }

  // Singletons reproduce the chain as projection; one block reproduces it as restriction.
  std::vector<int> ident(12);
  std::iota(ident.begin(), ident.end(), 0);
  const auto ds = decompose(c, Partition::from_labels(ident));
  CHECK((ds.projected.P - c.P).cwiseAbs().maxCoeff() < 1e-14);
  const auto d1 = decompose(c, Partition::from_labels(std::vector<int>(12, 0)));
  CHECK((d1.restricted[0].P - c.P).cwiseAbs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(Partition::from_labels({0, 2, 2}), InvalidPartition);
  CHECK_THROWS_AS(decompose(c, Partition::from_labels({0, 1})), InvalidPartition);
}

TEST_CASE("block-diagonal chain has zero projected gap") {
  Matrix P = Matrix::Zero(4, 4);
  P << 0.5, 0.5, 0, 0, 0.5, 0.5, 0, 0, 0, 0, 0.5, 0.5, 0, 0, 0.5, 0.5;
  const auto c = make_chain(P, Vector::Constant(4, 0.25));
  const auto part = Partition::from_labels({0, 0, 1, 1});
  CHECK(std::abs(spectral_gap(decompose(c, part).projected)) < 1e-14);
  CHECK(escape_rate(c, part) == 0.0);
  Rng rng(1);
  const auto rep = decomposition_check(c, part, {}, rng);
  CHECK(rep.report.passed());
}

TEST_CASE("Dirichlet form splits across blocks") {
  Rng rng(10);
  for (int rep = 0; rep < 20; ++rep) {
    const auto c = random_reversible_chain(10, rng);
    const auto part = random_partition(10, 3, rng);
    const auto d = decompose(c, part);
    const Vector g = rng.normal_vector(10);
    const Matrix E = block_dirichlet_terms(c, part, g);
    double rhs = 0.0;
    for (int k = 0; k < 3; ++k) {
      for (int l = 0; l < 3; ++l) rhs += k == l ? 0.0 : 0.5 * E(k, l);
      const auto& mem = d.members[static_cast<std::size_t>(k)];
      Vector gk(static_cast<Eigen::Index>(mem.size()));
      for (std::size_t a = 0; a < mem.size(); ++a) gk(static_cast<Eigen::Index>(a)) = g(mem[a]);
      rhs += d.projected.pi(k) * dirichlet_form(d.restricted[static_cast<std::size_t>(k)], gk);
    }
    CHECK(std::abs(rhs - dirichlet_form(c, g)) < 1e-12);
  }
}

TEST_CASE("decomposition check on mirrored chains") {
  Rng rng(12);
  int met = 0;
  for (int rep = 0; rep < 25; ++rep) {
    const auto c = random_reversible_chain(8, rng, {.mirrored = true});
    const auto part = random_partition(8, 2, rng, true);
    const auto r = decomposition_check(c, part, {}, rng);
    met += r.theorem_hypothesis_met;
    CHECK(r.report.passed());
    if (!r.report.passed()) {
      for (const auto& rec : r.report.records) MESSAGE(rec.name << " " << rec.lhs << " " << rec.rhs << " " << rec.note);
    }
  }
  CHECK(met == 25);
}

TEST_CASE("Metropolis-Hastings on a finite space") {
  // Uniform target with symmetric proposal: MH is the proposal itself.
  Matrix Q(3, 3);
  Q << 0.2, 0.5, 0.3, 0.5, 0.1, 0.4, 0.3, 0.4, 0.3;
  const auto uni = mh_finite(Vector::Constant(3, 1.0 / 3), Q);
  CHECK((uni.P - Q).cwiseAbs().maxCoeff() < 1e-15);

  Vector target(3);
  target << 0.5, 0.3, 0.2;
  const auto c = mh_finite(target, Q);
  CHECK(((target.transpose() * c.P).transpose() - target).cwiseAbs().maxCoeff() < 1e-15);

  Matrix asym = Q;
  asym(0, 2) = 0.0;
  asym(0, 0) = 0.5;
  CHECK_THROWS_AS(mh_finite(target, asym), InvalidProposal);
}

TEST_CASE("TV bound: two-state closed form and random chains") {
  const auto c = lazy(two_state(0.3, 0.1));
  Vector nu(2);
  nu << 1.0, 0.0;
  const auto check = tv_mixing_bound_check(c, nu, 40);
  CHECK(check.eta == doctest::Approx(4.0));
  for (int t = 0; t <= 40; ++t) {
    CHECK(check.tv[static_cast<std::size_t>(t)] == doctest::Approx(0.75 * std::pow(0.8, t)).epsilon(1e-10));
  }
  CHECK(check.report.passed());
  CHECK_THROWS_AS(tv_mixing_bound_check(two_state(0.8, 0.6), nu, 5), InvalidArgument);

  Rng rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 4 + rep % 7;
    const auto r = random_reversible_chain(n, rng, {.mirrored = n % 2 == 0});
    Vector start = Vector::Zero(n);
    start(rng.index(n)) = 1.0;
    const auto tv = tv_mixing_bound_check(r, start, 60);
    CHECK(tv.report.passed());
  }
}

TEST_CASE("chain text round trip is exact") {
  Rng rng(14);
  const auto c = random_reversible_chain(6, rng);
  std::stringstream ss;
  write_chain(ss, c);
  const auto back = read_chain(ss);
  CHECK(back.P == c.P);
  CHECK(back.pi == c.pi);
  std::stringstream bad("3\n0.5 0.5\n");
  CHECK_THROWS_AS(read_chain(bad), InvalidChain);
}

TEST_CASE("random generators") {
  Rng rng(15);
  const auto c = random_reversible_chain(10, rng, {.mirrored = true});
  for (int x = 0; x < 5; ++x) CHECK(c.pi(x) == c.pi(x + 5));
  CHECK(has_half_mass_set(c));
  const auto p = random_partition(10, 4, rng, true);
  CHECK(p.blocks == 4);
  for (int x = 0; x < 5; ++x) CHECK(p.labels[static_cast<std::size_t>(x)] == p.labels[static_cast<std::size_t>(x + 5)]);
  CHECK_THROWS_AS(random_partition(10, 6, rng, true), InvalidArgument);
}

TEST_CASE("small campaign passes") {
  const auto rep = run_decomposition_campaign({.chains = 30, .seed = 3});
  CHECK(rep.chains == 30);
  CHECK(rep.passed());
  CHECK(rep.hypothesis_met == 30);
  CHECK(!rep.tightest.empty());
}

TEST_CASE("comparison of MH chains sharing a proposal") {
  Rng rng(16);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 3 + rep % 8;
    const Matrix Q = random_proposal(n, rng, rep % 3 == 0 ? 0.4 : 0.0);
    Vector pi2(n), pi1(n);
    for (int x = 0; x < n; ++x) pi2(x) = rng.gamma(1.0);
    pi2 /= pi2.sum();
    for (int x = 0; x < n; ++x) pi1(x) = pi2(x) * std::exp(rng.uniform() - 0.5);
    pi1 /= pi1.sum();
    CHECK(comparison_check(pi1, pi2, Q).passed());
  }
  // Identical targets: c = 1 and both sides coincide.
  const Matrix Q = random_proposal(5, rng);
  const Vector pi = Vector::Constant(5, 0.2);
  const auto same = comparison_check(pi, pi, Q);
  for (const auto& r : same.records) {
    if (std::isfinite(r.rhs)) CHECK(std::abs(r.margin) < 1e-12);
  }
}
