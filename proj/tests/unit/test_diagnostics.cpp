#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"
#include "stemper/diagnostics.hpp"
#include "stemper/errors.hpp"
#include "stemper/finitelab.hpp"
#include "stemper/stats.hpp"

using namespace stemper;

namespace {

using boost::math::quadrature::gauss_kronrod;

Vector vec1(double a) { return Vector::Constant(1, a); }

double normal_pdf(double x, double mu, double var) {
  return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

double integrate(const std::function<double(double)>& g, double lo, double hi) {
  return gauss_kronrod<double, 61>::integrate(g, lo, hi, 25, 1e-12);
}

MixtureSpec two_gaussians(int d, double D) {
  Vector mu = Vector::Zero(d);
  mu(0) = D;
  return MixtureSpec({0.5, 0.5}, {mu, Vector(-mu)}, LocalPotential::isotropic_quadratic(d));
}

// Reversible chain on a T x K grid with fixed edge weights and r uniform.
Matrix grid_chain(int T, int K, double up, double label) {
  const int N = T * K;
  Matrix P = Matrix::Zero(N, N);
  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < K; ++j) {
      if (i + 1 < T) P(i * K + j, (i + 1) * K + j) = up;
      if (i > 0) P(i * K + j, (i - 1) * K + j) = up;
      if (i == 0) {
        for (int k = 0; k < K; ++k) {
          if (k != j) P(j, k) = label / K;
        }
      }
    }
  }
  for (int a = 0; a < N; ++a) P(a, a) = 1.0 - P.row(a).sum();
  return P;
}

}  // namespace

TEST_CASE("canonical path bound on hand-built grid chains") {
  // 2 x 2 grid, exact gap from the eigen solver.
  const Matrix P = grid_chain(2, 2, 0.3, 0.2);
  const std::vector<double> r{0.5, 0.5}, w{0.5, 0.5};
  const Vector pi = Vector::Constant(4, 0.25);
  const double gap = spectral_gap(make_chain(P, pi));
  const double bound = canonical_path_bound(P, r, w);
  CHECK(bound == doctest::Approx(std::min(0.5 * 0.3, 0.5 / 0.5 * 0.1) / 4.0));
  CHECK(bound <= gap);

  // One level: only the label term remains.
  const Matrix P1 = grid_chain(1, 2, 0.0, 0.4);
  const std::vector<double> r1{1.0};
  CHECK(canonical_path_bound(P1, r1, w) == doctest::Approx(0.5 * (1.0 / 0.5) * 0.2));

  // Fixed entries, r = 1/T: the bound decays between 1/T and 1/T^2.
  double prev = 0.0;
  for (int T : {2, 4, 8, 16}) {
    const std::vector<double> rt(static_cast<std::size_t>(T), 1.0 / T);
    const Matrix Pt = grid_chain(T, 2, 0.25, 0.3);
    const double b = canonical_path_bound(Pt, rt, w);
    const double g = spectral_gap(make_chain(Pt, Vector::Constant(2 * T, 0.5 / T)));
    CHECK(b <= g);
    if (prev > 0.0) {
      CHECK(prev / b >= 2.0 - 1e-12);
      CHECK(prev / b <= 4.0 + 1e-12);
    }
    prev = b;
  }
}

TEST_CASE("symmetrized flux is reversible and keeps row sums") {
  Matrix P(2, 2);
  P << 0.6, 0.4, 0.5, 0.5;
  Vector pi(2);
  pi << 0.5, 0.5;
  const Matrix S = symmetrize_flux(P, pi);
  CHECK(S(0, 1) == doctest::Approx(0.45));
  CHECK(S(1, 0) == doctest::Approx(0.45));
  CHECK(S.row(0).sum() == doctest::Approx(1.0));
}

TEST_CASE("projected estimate: single label and level entries against quadrature") {
  const MixtureSpec spec({1.0}, {vec1(0.7)}, LocalPotential::isotropic_quadratic(1));
  const Ladder ladder({0.5, 1.0});
  TemperingConfig cfg;
  cfg.alpha = 0.6;
  cfg.q_adj = 0.5;
  Rng rng(3);
  const auto est = projected_chain_estimate(spec, ladder, cfg, rng);
  REQUIRE(est.matrix.rows() == 2);
  // (alpha q / 2) int pi_0 min(1, pi_1 / pi_0), independently by quadrature.
  const double up = 0.5 * cfg.alpha * cfg.q_adj *
                    integrate([](double x) { return std::min(normal_pdf(x, 0.7, 2.0), normal_pdf(x, 0.7, 1.0)); }, -40, 40);
  CHECK(std::abs(est.matrix(0, 1) - up) <= 4.0 * est.std_error(0, 1));
  CHECK(est.report.passed());

  // Near-identical levels: the min is 1 and the entry is alpha q / 2.
  const Ladder close({1.0 - 1e-12, 1.0});
  const auto flat = projected_chain_estimate(spec, close, cfg, rng);
  CHECK(flat.matrix(0, 1) == doctest::Approx(0.15).epsilon(1e-9));
  CHECK(flat.matrix(1, 0) == doctest::Approx(0.15).epsilon(1e-9));

  const MixtureSpec custom({1.0}, {vec1(0.0)},
                           LocalPotential::custom(
                               1, [](const Vector& x) { return x.squaredNorm(); },
                               [](const Vector& x) { return Vector(2.0 * x); }, 2.0, 2.0));
  CHECK_THROWS_AS(projected_chain_estimate(custom, ladder, cfg, rng), Unsupported);
}

TEST_CASE("projected estimate: label entries against quadrature") {
  const MixtureSpec spec({0.3, 0.7}, {vec1(-1.0), vec1(1.0)}, LocalPotential::isotropic_quadratic(1));
  const Ladder ladder({0.4, 1.0});
  Rng rng(4);
  const auto est = projected_chain_estimate(spec, ladder, {}, rng);
  // (1/2) int pi_{1,0} w_1 pi_{1,1} / pi_1.
  auto pi10 = [](double x) { return normal_pdf(x, -1.0, 2.5); };
  auto pi11 = [](double x) { return normal_pdf(x, 1.0, 2.5); };
  const double exact = 0.5 * integrate([&](double x) { return pi10(x) * 0.7 * pi11(x) / (0.3 * pi10(x) + 0.7 * pi11(x)); }, -40, 40);
  CHECK(std::abs(est.matrix(0, 1) - exact) <= 4.0 * est.std_error(0, 1));
  // Label moves exist at the cold level as well.
  CHECK(est.matrix(2, 3) > 0.0);
  CHECK(est.report.passed());
}

TEST_CASE("projected estimate: full ladder for K=2, d=2") {
  const auto spec = two_gaussians(2, 4.0);
  const auto ladder = build_ladder(1.0, 1.0, 2, 4.0);
  Rng rng(5);
  const auto est = projected_chain_estimate(spec, ladder, {}, rng);
  CHECK(est.gap_lower >= est.bound);
  CHECK(est.canonical <= est.gap);
  CHECK(est.report.passed());
  CHECK(est.gap_lower <= est.gap * 1.5);
}

TEST_CASE("inequality suite") {
  Rng rng(6);
  SUBCASE("single component has no gradient gap") {
    const MixtureSpec spec({1.0}, {Vector::Constant(3, 1.5)}, LocalPotential::isotropic_quadratic(3));
    const auto rep = inequality_suite(spec, build_ladder(1.0, 1.0, 3, 1.5 * std::sqrt(3.0)), rng);
    CHECK(rep.passed());
  }
  SUBCASE("three modes, d=5, D=4, anisotropic curvature") {
    std::vector<Vector> modes;
    for (int j = 0; j < 3; ++j) {
      Vector m = rng.normal_vector(5);
      modes.push_back(4.0 * m / m.norm());
    }
    Vector a(5);
    a << 1.0, 2.0, 0.5, 1.5, 3.0;
    const MixtureSpec spec({0.2, 0.3, 0.5}, modes, LocalPotential::diagonal_quadratic(a));
    const auto ladder = build_ladder(3.0, 0.5, 5, 4.0);
    const auto rep = inequality_suite(spec, ladder, rng);
    CHECK(rep.passed());
    CHECK(rep.records.size() == 8);
    for (const auto& r : rep.records) CHECK(r.samples == 1000);

    // Rescaled modes: the suite still holds.
    std::vector<Vector> scaled;
    for (const auto& m : modes) scaled.push_back(2.5 * m);
    const MixtureSpec big({0.2, 0.3, 0.5}, scaled, LocalPotential::diagonal_quadratic(a));
    CHECK(inequality_suite(big, build_ladder(3.0, 0.5, 5, 10.0), rng).passed());
  }
  CHECK_THROWS_AS(inequality_suite(two_gaussians(2, 1.0), Ladder::single_level(), rng, {.n_points = 10}), InvalidArgument);
}

TEST_CASE("MALA mean map at h = 1/L on an isotropic quadratic") {
  // x - h grad f(x) = x (1 - h a); with a = L = h^{-1} both points map to 0.
  const auto f = LocalPotential::isotropic_quadratic(2);
  Vector x(2), y(2);
  x << 1.0, -2.0;
  y << 0.5, 3.0;
  const Vector mx = x - f.gradient(x), my = y - f.gradient(y);
  CHECK(mx.norm() == 0.0);
  CHECK((mx - my).norm() <= (x - y).norm());
}

TEST_CASE("counterexample bounds") {
  // F(0) = 1: with no ladder ratios the bound is 16.
  CHECK(ladder_ratio_bound(Ladder::single_level(), 5) == 16.0);
  CHECK(ladder_ratio_bound(Ladder({1.0 / 1.5, 1.0}), 48) <= 16.0 * std::exp(-0.25));
  CHECK(ladder_ratio_bound(Ladder({1.0 / 1.5, 1.0}), 480) <= 16.0 * std::exp(-2.5));
  CHECK(16.0 * std::exp(-0.25) == doctest::Approx(12.4606).epsilon(1e-4));

  // D^2 decay at beta1 = 1.
  const double b2 = hot_level_flow_bound(2, 2.0, 1.0, 0.25, 0.0);
  const double b4 = hot_level_flow_bound(2, 4.0, 1.0, 0.25, 0.0);
  const double b8 = hot_level_flow_bound(2, 8.0, 1.0, 0.25, 0.0);
  CHECK(b4 / b2 == doctest::Approx(std::exp(-12.0 / 2.25)).epsilon(1e-12));
  CHECK(b8 / b4 == doctest::Approx(std::exp(-48.0 / 2.25)).epsilon(1e-12));
  CHECK(hot_level_flow_bound(3, 0.0, 1.0, 1.0, 0.25) == doctest::Approx(8.0 * std::pow(2.0 / 3.0, 1.5)));
}

TEST_CASE("counterexample witness: half-space flow against quadrature in d=1") {
  const auto spec = two_gaussians(1, 1.0);
  const Ladder ladder({1.0});
  Rng rng(7);
  const double h = 0.25;
  const auto wit = counterexample_witness(spec, ladder, h, 0.0, 200000, rng);
  CHECK(wit.report.passed());
  // int_{x>0} int_{y<0} q(x, y) min(pi(x), pi(y)) with pi the equal mixture.
  auto pi = [](double x) { return 0.5 * normal_pdf(x, 1.0, 1.0) + 0.5 * normal_pdf(x, -1.0, 1.0); };
  const double exact = integrate(
      [&](double x) {
        return integrate([&](double y) { return normal_pdf(y, x, 2.0 * h) * std::min(pi(x), pi(y)); }, -20.0, 0.0);
      },
      0.0, 20.0);
  CHECK(std::abs(wit.flow_upper / 2.0 - exact) <= 4.0 * wit.flow_se / 2.0);
  CHECK(wit.flow_lower == doctest::Approx(wit.flow_upper / 4.0));
  CHECK(wit.flow_upper <= wit.numerator);

  const MixtureSpec lopsided({0.3, 0.7}, spec.modes(), LocalPotential::isotropic_quadratic(1));
  CHECK_THROWS_AS(counterexample_witness(lopsided, ladder, h, 0.0, 100, rng), InvalidArgument);
  const MixtureSpec off({0.5, 0.5}, {vec1(1.0), vec1(-2.0)}, LocalPotential::isotropic_quadratic(1));
  CHECK_THROWS_AS(counterexample_witness(off, ladder, h, 0.0, 100, rng), InvalidArgument);
}

TEST_CASE("counterexample witness on a tempering ladder") {
  const auto spec = two_gaussians(2, 4.0);
  const auto ladder = build_ladder(1.0, 1.0, 2, 4.0);
  Rng rng(8);
  const auto wit = counterexample_witness(spec, ladder, 0.25, 0.0, 20000, rng);
  CHECK(wit.report.passed());
  CHECK(std::isfinite(wit.ratio_bound));
  CHECK(std::isnan(counterexample_witness(spec, ladder, 0.25, 0.3, 2000, rng).ratio_bound));
}

TEST_CASE("marginal fit against exact mixture draws") {
  const MixtureSpec spec({0.4, 0.6}, {Vector::Constant(2, -1.5), Vector::Constant(2, 1.5)},
                         LocalPotential::isotropic_quadratic(2));
  const Ladder ladder = Ladder::single_level();
  Rng rng(9);
  int rejections = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<Vector> xs;
    for (int k = 0; k < 2000; ++k) {
      const int j = rng.uniform() < 0.4 ? 0 : 1;
      xs.push_back(spec.mode(j) + rng.normal_vector(2));
    }
    const auto fit = marginal_fit(xs, spec, ladder, 0, {.alpha = 0.05, .occupancy_tolerance = 0.05, .min_effective = 500});
    rejections += fit.p_value[0] < 0.05;
    CHECK(fit.occupancy_passed);
  }
  CHECK(rejections <= 12);

  const MixtureSpec one({1.0}, {Vector::Zero(2)}, LocalPotential::isotropic_quadratic(2));
  std::vector<Vector> xs;
  for (int k = 0; k < 1000; ++k) xs.push_back(rng.normal_vector(2));
  const auto fit = marginal_fit(xs, one, ladder, 0);
  CHECK(fit.occupancy == std::vector<double>{1.0});

  const Ladder two({0.5, 1.0});
  CHECK_THROWS_AS(marginal_fit(xs, one, two, 0), Unsupported);
}

TEST_CASE("marginal fit flags a stuck single-level chain") {
  const auto spec = two_gaussians(2, 8.0);
  const Ladder ladder = Ladder::single_level();
  TemperingConfig cfg;
  cfg.step_size = 0.5;
  cfg.lazy = true;
  cfg.seed = 10;
  std::vector<Vector> xs;
  RunOptions opts;
  opts.n_steps = 100000;
  opts.keep_trace = false;
  opts.observer = [&](const TemperingState& s, const TraceRecord&) { xs.push_back(s.x); };
  Rng rng(10);
  run_chain(default_initial_state(spec, ladder, rng), spec, ladder, cfg, opts);
  const auto fit = marginal_fit(xs, spec, ladder, 0);
  CHECK(*std::max_element(fit.occupancy.begin(), fit.occupancy.end()) >= 0.95);
  CHECK_FALSE(fit.passed());
}

TEST_CASE("swap acceptance of a calibrated single-mode chain") {
  const MixtureSpec spec({1.0}, {Vector::Zero(2)}, LocalPotential::isotropic_quadratic(2));
  const std::vector<double> betas{0.25, 0.5, 1.0};
  std::vector<double> zeta;
  for (double b : betas) zeta.push_back(-std::log(2.0 * std::numbers::pi / b));  // -log Z_i, d = 2
  const Ladder ladder(betas, zeta);
  TemperingConfig cfg;
  cfg.step_size = 0.25;
  cfg.seed = 11;
  Rng rng(11);
  const auto run = run_chain(default_initial_state(spec, ladder, rng), spec, ladder, cfg, {.n_steps = 100000});
  const auto rep = swap_acceptance_check(run.trace, spec, ladder);
  CHECK(rep.records.size() == 2);
  CHECK(rep.passed());
}
