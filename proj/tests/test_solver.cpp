#include <cmath>
#include <random>

#include "clab/ensemble.hpp"
#include "clab/kernels.hpp"
#include "clab/solver.hpp"
#include "doctest.h"

using namespace clab;

namespace {

SiteField random_site(const Torus& t, unsigned seed, bool mean_zero = false) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SiteField f(t);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = u(g);
  if (mean_zero) f.add_constant(-f.mean());
  return f;
}

EdgeField field(const Torus& t, std::uint64_t seed) {
  return sample_field(t, {ConductanceLaw::uniform(0.25, 1.0, 0.25), {seed}}, 0);
}

double rel_residual(const OperatorSpec& op, const SiteField& u, const SiteField& b) {
  SiteField r = apply(op, u) - b;
  return std::sqrt(inner(r, r) / inner(b, b));
}

}  // namespace

TEST_CASE("apply on hand-evaluated cases") {
  Torus t(1, 4);
  SiteField d0(t);
  d0[0] = 1.0;
  SiteField a = apply(OperatorSpec::constant(1.0, 0.0), d0);
  CHECK(a[0] == 2.0);
  CHECK(a[1] == -1.0);
  CHECK(a[2] == 0.0);
  CHECK(a[3] == -1.0);
  Torus t3(3, 6);
  EdgeField w = field(t3, 1);
  SiteField c(t3, 2.0);
  SiteField ac = apply(OperatorSpec::hetero(w, 0.3), c);
  for (std::size_t x = 0; x < t3.sites(); ++x) CHECK(ac[x] == doctest::Approx(0.6).epsilon(1e-14));
}

TEST_CASE("ellipticity, symmetry and energy identity") {
  Torus t(3, 6);
  EdgeField w = field(t, 2);
  const double lambda = 0.1;
  auto op = OperatorSpec::hetero(w, lambda);
  SiteField f = random_site(t, 3);
  SiteField g = random_site(t, 4);
  const double afg = inner(apply(op, f), g);
  const double fag = inner(f, apply(op, g));
  CHECK(std::abs(afg - fag) <= 1e-12 * std::abs(afg));
  VectorField gf = grad(f);
  double energy = lambda * inner(f, f);
  double grad2 = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (std::size_t x = 0; x < t.sites(); ++x) {
      energy += w.at(i, x) * gf.at(i, x) * gf.at(i, x);
      grad2 += gf.at(i, x) * gf.at(i, x);
    }
  }
  const double aff = inner(apply(op, f), f);
  CHECK(aff == doctest::Approx(energy).epsilon(1e-12));
  CHECK(aff >= lambda * inner(f, f) + 0.25 * grad2);
}

TEST_CASE("CG recovers a planted solution") {
  Torus t(3, 8);
  EdgeField w = field(t, 5);
  auto op = OperatorSpec::hetero(w, 1.0);
  SiteField g = random_site(t, 6);
  Solution s = solve_cg(op, apply(op, g), {1e-12});
  CHECK(s.report.converged);
  CHECK(s.report.rel_residual <= 1e-12);
  CHECK(max_abs_diff(s.u, g) < 1e-10);
}

TEST_CASE("CG against the dense LU oracle") {
  for (double lambda : {0.0, 0.5}) {
    Torus t(2, 4);
    EdgeField w = field(t, 7);
    auto op = OperatorSpec::hetero(w, lambda);
    SiteField b = random_site(t, 8, true);
    CHECK(max_abs_diff(solve_cg(op, b, {1e-13}).u, dense_solve(op, b)) <= 1e-8);
  }
  Torus big(3, 16);
  EdgeField w = field(big, 9);
  auto op = OperatorSpec::hetero(w, 0.0);
  SiteField b = random_site(big, 10, true);
  Solution s = solve_cg(op, b, {1e-12});
  CHECK(max_abs_diff(s.u, dense_solve(op, b)) <= 1e-8);
  CHECK(std::abs(s.u.mean()) < 1e-14);
}

TEST_CASE("degenerate and invalid solves") {
  Torus t(2, 8);
  EdgeField w = field(t, 11);
  auto op0 = OperatorSpec::hetero(w, 0.0);
  Solution z = solve_cg(op0, SiteField(t));
  CHECK(z.u.max_abs() == 0.0);
  CHECK(z.report.converged);
  CHECK_THROWS_AS(solve_cg(op0, SiteField(t, 1.0)), std::invalid_argument);
  SolverSettings tight{1e-14, 2};
  CHECK_THROWS_AS(solve_cg(op0, random_site(t, 12, true), tight), SolveError);
  try {
    solve_cg(op0, random_site(t, 12, true), tight);
  } catch (const SolveError& e) {
    CHECK(e.report.iterations == 2);
    CHECK_FALSE(e.report.converged);
  }
  Torus other(2, 4);
  CHECK_THROWS_AS(apply(op0, SiteField(other)), LatticeError);
}

TEST_CASE("deterministic and threaded CG agree bitwise") {
  Torus t(3, 16);
  EdgeField w = field(t, 13);
  auto op = OperatorSpec::hetero(w, 0.0);
  SiteField b = random_site(t, 14, true);
  SolverSettings det{1e-10, 20000, true, true};
  SolverSettings thr{1e-10, 20000, true, false};
  kernels::set_threads(4);
  Solution a = solve_cg(op, b, det);
  Solution c = solve_cg(op, b, thr);
  kernels::set_threads(0);
  CHECK(a.report.iterations == c.report.iterations);
  CHECK(max_abs_diff(a.u, c.u) == 0.0);
}

TEST_CASE("Jacobi preconditioning off still converges to the same solution") {
  Torus t(2, 16);
  EdgeField w = field(t, 15);
  auto op = OperatorSpec::hetero(w, 0.01);
  SiteField b = random_site(t, 16);
  SolverSettings plain{1e-12, 20000, false};
  CHECK(max_abs_diff(solve_cg(op, b, plain).u, solve_cg(op, b, {1e-12}).u) < 1e-9);
}

TEST_CASE("Green columns: total mass, symmetry, positivity") {
  Torus t(2, 12);
  EdgeField w = field(t, 17);
  const double lambda = 0.05;
  auto op = OperatorSpec::hetero(w, lambda);
  SiteField g0 = green_column(op, t, 0, {1e-13});
  CHECK(g0.sum() == doctest::Approx(1.0 / lambda).epsilon(1e-10));
  for (double v : g0.values()) CHECK(v > -1e-12);
  for (std::size_t z : {5u, 37u, 100u}) {
    SiteField gz = green_column(op, t, z, {1e-13});
    CHECK(std::abs(gz[0] - g0[z]) <= 1e-10);
  }
  CHECK_THROWS_AS(green_column(OperatorSpec::hetero(w, 0.0), t, 0), std::invalid_argument);
  SiteField dip = green_dipole(OperatorSpec::hetero(w, 0.0), t, 1, 7, {1e-12});
  CHECK(std::abs(dip.mean()) < 1e-14);
}

TEST_CASE("maximum principle for nonnegative sources") {
  Torus t(3, 8);
  EdgeField w = field(t, 18);
  SiteField b = random_site(t, 19);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::abs(b[i]);
  SiteField u = solve_cg(OperatorSpec::hetero(w, 0.2), b).u;
  for (double v : u.values()) CHECK(v >= -1e-12);
}

TEST_CASE("FFT constant solver") {
  Torus t(2, 16);
  SiteField b = random_site(t, 20);
  const double abar = 0.6, alpha = 0.7, eps = 1.0 / 16;
  SiteField uf = solve_constant_fft(abar, alpha, eps, b);
  SiteField uc = solve_cg(OperatorSpec::constant(abar, alpha, eps), b, {1e-14}).u;
  CHECK(max_abs_diff(uf, uc) <= 1e-10);
  CHECK(rel_residual(OperatorSpec::constant(abar, alpha, eps), uf, b) < 1e-13);

  // A single real Fourier mode is an eigenfunction.
  Torus t3(3, 8, 2.0);
  SiteField mode(t3);
  for (std::size_t x = 0; x < t3.sites(); ++x) {
    const Coord c = t3.coords(x);
    mode[x] = std::cos(2.0 * M_PI * (c[0] + 3 * c[2]) / 8.0);
  }
  const double e3 = t3.mesh();
  const double sym = 1.5 + 0.8 / (e3 * e3) *
                               (4 * std::pow(std::sin(M_PI / 8), 2) + 4 * std::pow(std::sin(3 * M_PI / 8), 2));
  SiteField um = solve_constant_fft(0.8, 1.5, e3, mode);
  for (std::size_t x = 0; x < t3.sites(); ++x) CHECK(um[x] == doctest::Approx(mode[x] / sym).epsilon(1e-12));

  SiteField heavy = solve_constant_fft(abar, 1e6, 1.0, b);
  SiteField approx = b;
  approx *= 1e-6;
  CHECK(max_abs_diff(heavy, approx) <= 1e-3 * approx.max_abs());

  CHECK_THROWS_AS(solve_constant_fft(abar, -1.0, eps, b), std::invalid_argument);
  CHECK_THROWS_AS(solve_constant_fft(abar, 0.0, eps, SiteField(t, 1.0)), std::invalid_argument);
  SiteField mz = random_site(t, 21, true);
  SiteField u0 = solve_constant_fft(abar, 0.0, eps, mz);
  CHECK(std::abs(u0.mean()) < 1e-14);
  CHECK(max_abs_diff(u0, solve_cg(OperatorSpec::constant(abar, 0.0, eps), mz, {1e-14}).u) < 1e-10);
}

TEST_CASE("odd side lengths go through the FFT path too") {
  Torus t(2, 9);
  SiteField b = random_site(t, 22);
  SiteField uf = solve_constant_fft(1.0, 0.3, 1.0, b);
  CHECK(max_abs_diff(uf, solve_cg(OperatorSpec::constant(1.0, 0.3), b, {1e-14}).u) < 1e-10);
}

TEST_CASE("constant-coefficient Green function decays like |y|^(2-d) in d=3") {
  Torus t(3, 32);
  auto op = OperatorSpec::constant(1.0, 1e-4);
  SiteField delta(t);
  delta[0] = 1.0;
  SiteField g = solve_cg(op, delta, {1e-11}).u;
  SiteField gf = solve_constant_fft(1.0, 1e-4, 1.0, delta);
  CHECK(max_abs_diff(g, gf) < 1e-8 * gf.max_abs());
  // Shell averages of G(y) - G(far) to remove the 1/(lambda n) zero mode.
  double far = gf[t.index({16, 16, 16})];
  std::vector<double> lx, ly;
  for (int r = 2; r <= 10; ++r) {
    double s = 0;
    int c = 0;
    for (std::size_t x = 0; x < t.sites(); ++x) {
      const double d = t.distance(x, 0);
      if (std::abs(d - r) < 0.5) {
        s += gf[x] - far;
        ++c;
      }
    }
    lx.push_back(std::log(r));
    ly.push_back(std::log(s / c));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i] / lx.size();
    my += ly[i] / ly.size();
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  CHECK(sxy / sxx == doctest::Approx(-1.0).epsilon(0.3));
}

TEST_CASE("exponential decay fit for a massive point source") {
  Torus t(2, 64);
  SiteField delta(t);
  const std::size_t c = t.index({32, 32});
  delta[c] = 1.0;
  SiteField u1 = solve_cg(OperatorSpec::constant(1.0, 1.0), delta, {1e-13}).u;
  SiteField u2 = solve_cg(OperatorSpec::constant(1.0, 2.0), delta, {1e-13}).u;
  DecayFit f1 = decay_check(u1, c, 2.0, 12.0);
  DecayFit f2 = decay_check(u2, c, 2.0, 12.0);
  CHECK(f1.accepted);
  CHECK(f1.rate > 0.0);
  CHECK(f1.r2 >= 0.95);
  CHECK(f2.rate > f1.rate);
  DecayFit flat = decay_check(SiteField(t, 1.0), c, 2.0, 12.0);
  CHECK_FALSE(flat.accepted);
  CHECK_THROWS_AS(decay_check(u1, c, 2.0, 32.0), std::invalid_argument);
}
