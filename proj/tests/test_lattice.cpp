#include <cmath>
#include <random>

#include "clab/kernels.hpp"
#include "clab/lattice.hpp"
#include "doctest.h"

using namespace clab;

namespace {

SiteField random_site(const Torus& t, unsigned seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SiteField f(t);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = u(g);
  return f;
}

VectorField random_vector(const Torus& t, unsigned seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorField F(t);
  for (double& x : F.values()) x = u(g);
  return F;
}

EdgeField random_edges(const Torus& t, unsigned seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<double> v(t.edges());
  for (double& x : v) x = u(g);
  return EdgeField(t, 0.1, v);
}

}  // namespace

TEST_CASE("index and coords round trip with periodic wrap") {
  Torus t(3, 5);
  for (std::size_t i = 0; i < t.sites(); ++i) CHECK(t.index(t.coords(i)) == i);
  CHECK(t.index({-1, 0, 0}) == 4);
  CHECK(t.index({0, 6, 0}) == 5);
  CHECK(t.neighbor(4, 0, 1) == 0);
  CHECK(t.neighbor(0, 2, -1) == 100);
  CHECK(t.distance(0, t.index({4, 3, 0})) == doctest::Approx(std::sqrt(1.0 + 4.0)));
}

TEST_CASE("invalid torus and field shapes are rejected") {
  CHECK_THROWS_AS(Torus(0, 4), LatticeError);
  CHECK_THROWS_AS(Torus(6, 4), LatticeError);
  CHECK_THROWS_AS(Torus(2, 1), LatticeError);
  Torus t(2, 4);
  CHECK_THROWS_AS(SiteField(t, std::vector<double>(3)), LatticeError);
  CHECK_THROWS_AS(EdgeField::constant(t, 1.5), LatticeError);
  CHECK_THROWS_AS(EdgeField::constant(t, 0.05, 0.1), LatticeError);
  SiteField a(t), b(Torus(2, 8));
  CHECK_THROWS_AS(a += b, LatticeError);
  CHECK_THROWS_AS(grad_eps(a, 0.0), LatticeError);
}

TEST_CASE("hand-computed gradient and adjoint on a 1d ring") {
  Torus t(1, 4);
  SiteField f(t, std::vector<double>{1.0, 4.0, 9.0, 16.0});
  SiteField g = grad_dir(f, 0);
  CHECK(g[0] == 3.0);
  CHECK(g[1] == 5.0);
  CHECK(g[2] == 7.0);
  CHECK(g[3] == -15.0);
  SiteField h = div_star_dir(f, 0);
  CHECK(h[0] == 15.0);
  CHECK(h[1] == -3.0);
  CHECK(h[3] == -7.0);
  SiteField ge = grad_eps_dir(f, 0, 0.5);
  CHECK(ge[0] == 6.0);
}

TEST_CASE("summation by parts on random fields") {
  for (int d = 1; d <= 4; ++d) {
    Torus t(d, d == 1 ? 17 : (d == 4 ? 5 : 9));
    SiteField f = random_site(t, 11 + d);
    VectorField F = random_vector(t, 23 + d);
    const double lhs = inner(grad(f), F);
    const double rhs = inner(f, div_star(F));
    CHECK(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(lhs)));
    const double eps = 1.0 / t.side_sites();
    CHECK(std::abs(inner(grad_eps(f, eps), F) - inner(f, div_star_eps(F, eps))) <=
          1e-12 * (1.0 + std::abs(lhs) / eps));
  }
}

TEST_CASE("gradient of a constant vanishes and div* annihilates constants in mean") {
  Torus t(3, 6);
  SiteField c(t, 2.5);
  CHECK(grad(c).values()[7] == 0.0);
  VectorField F = random_vector(t, 3);
  CHECK(std::abs(div_star(F).sum()) < 1e-12);
}

TEST_CASE("shift moves values by the lattice offset") {
  Torus t(2, 5);
  SiteField f = random_site(t, 5);
  Coord off{2, -1};
  SiteField g = shift(f, off);
  for (std::size_t x = 0; x < t.sites(); ++x) CHECK(g[x] == f[t.shifted(x, off)]);
  SiteField back = shift(g, Coord{-2, 1});
  CHECK(max_abs_diff(back, f) == 0.0);
}

TEST_CASE("Leibniz rule holds to rounding") {
  Torus t(3, 8, 2.0);
  const double eps = t.mesh();
  SiteField f = random_site(t, 7);
  SiteField g = random_site(t, 8);
  auto [first, second] = leibniz_expand(f, g, eps);
  VectorField lhs = grad_eps(hadamard(f, g), eps);
  first += second;
  CHECK(max_abs_diff(lhs, first) <= 1e-12 / eps);
}

TEST_CASE("reference and parallel kernels agree bitwise") {
  for (int d = 1; d <= 4; ++d) {
    Torus t(d, d == 1 ? 33 : 7);
    SiteField u = random_site(t, 31 + d);
    EdgeField a = random_edges(t, 41 + d);
    for (int dir = 0; dir < d; ++dir) {
      std::vector<double> r(t.sites()), p(t.sites());
      kernels::reference::forward_diff(t, dir, u.values(), r);
      kernels::parallel::forward_diff(t, dir, u.values(), p);
      CHECK(r == p);
      kernels::reference::backward_adj(t, dir, u.values(), r);
      kernels::parallel::backward_adj(t, dir, u.values(), p);
      CHECK(r == p);
    }
    for (bool varying : {true, false}) {
      kernels::EllipticStencil op{0.3, 1.7, varying ? a.values() : std::span<const double>{}, 0.6};
      std::vector<double> r(t.sites()), p(t.sites());
      kernels::reference::apply_elliptic(t, op, u.values(), r);
      kernels::parallel::apply_elliptic(t, op, u.values(), p);
      CHECK(r == p);
      kernels::reference::diagonal(t, op, r);
      kernels::parallel::diagonal(t, op, p);
      CHECK(r == p);
    }
  }
}

TEST_CASE("elliptic stencil equals lambda u + div*(a grad u)") {
  Torus t(2, 6);
  SiteField u = random_site(t, 1);
  EdgeField a = random_edges(t, 2);
  VectorField flux = grad(u);
  for (int i = 0; i < 2; ++i) {
    for (std::size_t x = 0; x < t.sites(); ++x) flux.at(i, x) *= a.at(i, x);
  }
  SiteField expect = div_star(flux);
  expect.add_scaled(0.25, u);
  std::vector<double> got(t.sites());
  kernels::parallel::apply_elliptic(t, {0.25, 1.0, a.values(), 1.0}, u.values(), got);
  for (std::size_t x = 0; x < t.sites(); ++x) CHECK(got[x] == doctest::Approx(expect[x]).epsilon(1e-13));
}

TEST_CASE("blocked reductions are exact on compensated-sum torture input") {
  std::vector<double> v;
  for (int i = 0; i < 20000; ++i) {
    v.push_back(1e16);
    v.push_back(1.0);
    v.push_back(-1e16);
  }
  CHECK(kernels::parallel::sum(v) == 20000.0);
  CHECK(kernels::reference::sum(v) == 20000.0);
  kernels::set_threads(1);
  const double one = kernels::parallel::dot(v, v);
  kernels::set_threads(4);
  CHECK(kernels::parallel::dot(v, v) == one);
  kernels::set_threads(0);
}

TEST_CASE("two-site ring gradient wraps around") {
  Torus t(1, 2);
  SiteField f(t, std::vector<double>{0.0, 1.0});
  SiteField g = grad_dir(f, 0);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == -1.0);
}

TEST_CASE("gradient of the origin indicator touches only 2d edges") {
  Torus t(2, 4);
  SiteField f(t);
  f[0] = 1.0;
  VectorField g = grad(f);
  int nonzero = 0;
  for (int i = 0; i < 2; ++i) {
    for (std::size_t x = 0; x < t.sites(); ++x) {
      if (g.at(i, x) != 0.0) {
        ++nonzero;
        CHECK(std::abs(g.at(i, x)) == 1.0);
      }
    }
  }
  CHECK(nonzero == 4);
  CHECK(g.at(0, 0) == -1.0);
  CHECK(g.at(0, t.index({-1, 0})) == 1.0);
}

TEST_CASE("1d lattice Laplacian of the origin indicator") {
  Torus t(1, 4);
  SiteField f(t);
  f[0] = 1.0;
  SiteField lap = div_star(grad(f));
  CHECK(lap[0] == 2.0);
  CHECK(lap[1] == -1.0);
  CHECK(lap[2] == 0.0);
  CHECK(lap[3] == -1.0);
}

TEST_CASE("grad_i and div*_j commute") {
  Torus t(3, 6);
  SiteField f = random_site(t, 99);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(max_abs_diff(grad_dir(div_star_dir(f, j), i), div_star_dir(grad_dir(f, i), j)) <
            1e-14);
    }
  }
}

TEST_CASE("eps-gradient of a smooth bump is first-order accurate") {
  // f(x) = sin(2 pi x / S) on the 1d macro grid; forward difference error ~ eps/2 |f''|.
  const double S = 1.0;
  double prev = 0.0;
  for (int L : {64, 128}) {
    Torus t(1, L, S);
    const double eps = t.mesh();
    SiteField f(t);
    for (int x = 0; x < L; ++x) f[x] = std::sin(2.0 * M_PI * x * eps);
    SiteField g = grad_eps_dir(f, 0, eps);
    double err = 0.0;
    for (int k = 0; k < 5; ++k) {
      const int x = k * L / 5 + 1;
      err = std::max(err, std::abs(g[x] - 2.0 * M_PI * std::cos(2.0 * M_PI * x * eps)));
    }
    CHECK(err < 2.0 * M_PI * M_PI * eps * 2.0 * M_PI);
    if (prev > 0.0) CHECK(err / prev == doctest::Approx(0.5).epsilon(0.05));
    prev = err;
  }
}

TEST_CASE("Leibniz degenerate cases") {
  Torus t(2, 8, 1.0);
  const double eps = t.mesh();
  SiteField f = random_site(t, 12);
  SiteField one(t, 1.0);
  auto [a1, b1] = leibniz_expand(f, one, eps);
  CHECK(max_abs_diff(a1, grad_eps(f, eps)) == 0.0);
  CHECK(max_abs_diff(b1, VectorField(t)) == 0.0);
  auto [a2, b2] = leibniz_expand(one, f, eps);
  CHECK(max_abs_diff(a2, VectorField(t)) == 0.0);
  CHECK(max_abs_diff(b2, grad_eps(f, eps)) < 1e-13);
}
