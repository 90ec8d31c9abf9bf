#include <cmath>
#include <filesystem>
#include <random>

#include "clab/correctors.hpp"
#include "clab/ensemble.hpp"
#include "doctest.h"

using namespace clab;

namespace {

const Ensemble kEns{ConductanceLaw::uniform(0.25, 1.0, 0.25), {4242}};

EdgeField field(const Torus& t, std::uint64_t m) { return sample_field(t, kEns, m); }

SolverSettings tight() { return {1e-13, 50000}; }

}  // namespace

TEST_CASE("constant coefficients: the whole hierarchy vanishes") {
  Torus t(3, 8);
  EdgeField a = EdgeField::constant(t, 0.6);
  auto phi = first_correctors(a, 0.0);
  for (const auto& p : phi) CHECK(p.field.max_abs() == 0.0);
  auto psi = second_correctors(a, phi, 0.6, 0.0);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(psi.at(i, j).field.max_abs() == 0.0);
      CHECK(psi.tilde(i, j).field.max_abs() == 0.0);
    }
  }
  const SiteField one(t, 1.0);
  Corrector mass = higher_corrector(a, 2, "mass", {{RhsTerm::Variant::Mass, 1, &one, 1.0}}, 0.0);
  CHECK(mass.field.max_abs() == 0.0);
  CHECK(mass.subtracted_mean == doctest::Approx(0.6));
}

TEST_CASE("d=1: the flux is the harmonic mean") {
  for (int L : {16, 257}) {
    Torus t(1, L);
    EdgeField a = field(t, 1);
    Corrector phi = first_corrector(a, 0, 0.0, tight());
    double inv = 0.0;
    for (double w : a.values()) inv += 1.0 / w;
    const double harm = L / inv;
    for (int x = 0; x < L; ++x) {
      CHECK(a.at(0, x) * (1.0 + phi.gradient.at(0, x)) == doctest::Approx(harm).epsilon(1e-10));
      CHECK(std::abs(phi.gradient.at(0, x) - (harm / a.at(0, x) - 1.0)) <= 1e-10);
    }
  }
}

TEST_CASE("first corrector against the dense oracle, gauge and harmonic coordinates") {
  Torus t(2, 4);
  EdgeField a = field(t, 2);
  for (int j = 0; j < 2; ++j) {
    Corrector phi = first_corrector(a, j, 0.0, tight());
    SiteField aj = a.component_field(j);
    SiteField rhs = div_star_dir(aj, j);
    rhs *= -1.0;
    CHECK(max_abs_diff(phi.field, dense_solve(OperatorSpec::hetero(a, 0.0), rhs)) <= 1e-8);
  }
  Torus t3(3, 12);
  EdgeField a3 = field(t3, 3);
  for (const Corrector& phi : first_correctors(a3, 0.0)) {
    CHECK(std::abs(phi.field.mean()) <= 1e-12 * phi.field.max_abs());
    CHECK(phi.report.rel_residual <= 1e-10);
    const int j = phi.label.back() - '1';
    VectorField flux(t3);
    for (int i = 0; i < 3; ++i) {
      for (std::size_t x = 0; x < t3.sites(); ++x) {
        flux.at(i, x) = a3.at(i, x) * (phi.gradient.at(i, x) + (i == j ? 1.0 : 0.0));
      }
    }
    CHECK(div_star(flux).max_abs() <= 1e-9);
  }
}

TEST_CASE("flux potentials") {
  Torus t(2, 8);
  std::mt19937_64 g(5);
  SiteField F(t);
  for (std::size_t x = 0; x < t.sites(); ++x) F[x] = std::uniform_real_distribution<>(-1, 1)(g);
  F.add_constant(-F.mean());
  FluxPotential P = flux_potential(F);
  CHECK(flux_potential_residual(P) <= 1e-10);
  FluxPotential Pl = flux_potential(F, 0.3);
  CHECK(flux_potential_residual(Pl) > 1e-3);

  FluxPotential Z = flux_potential(SiteField(t));
  for (const auto& c : Z.psi) CHECK(c.max_abs() == 0.0);

  EdgeField a = field(t, 6);
  FluxPotential D = flux_potential_div(a, 1, F);
  CHECK(flux_potential_residual(D) == 0.0);
  CHECK(D.psi[0].max_abs() == 0.0);
  CHECK_THROWS_AS(flux_potential(SiteField(t, 1.0)), std::invalid_argument);
}

TEST_CASE("second correctors: residuals and cross-module equality") {
  Torus t(3, 16);
  EdgeField a = field(t, 7);
  auto phi = first_correctors(a, 0.0, tight());
  const double abar = 0.56;
  auto sc = second_correctors(a, phi, abar, 0.0, tight());
  const SiteField one(t, 1.0);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Corrector& p = sc.at(i, j);
      // Independent residual: -[a_i(1_{i=j} + grad_i phi_j) - abar 1_{i=j}], centered.
      SiteField rhs(t);
      for (std::size_t x = 0; x < t.sites(); ++x) {
        rhs[x] = -(a.at(i, x) * ((i == j) + phi[j].gradient.at(i, x)) - abar * (i == j));
      }
      rhs.add_constant(-rhs.mean());
      SiteField r = apply(OperatorSpec::hetero(a, 0.0), p.field) - rhs;
      CHECK(std::sqrt(inner(r, r) / inner(rhs, rhs)) <= 1e-12);
      CHECK(std::abs(p.field.mean()) <= 1e-12 * p.field.max_abs());

      Corrector again = higher_corrector(a, 2, "div", {{RhsTerm::Variant::Div, i, &phi[j].field, -1.0}},
                                         0.0, tight());
      CHECK(max_abs_diff(again.field, sc.tilde(i, j).field) == 0.0);
    }
  }
  // The subtracted mean of psi_ii is -(A_ii - abar) with A the torus flux average.
  double Aii = 0.0;
  for (std::size_t x = 0; x < t.sites(); ++x) Aii += a.at(0, x) * (1.0 + phi[0].gradient.at(0, x));
  Aii /= t.sites();
  CHECK(sc.at(0, 0).subtracted_mean == doctest::Approx(-(Aii - abar)).epsilon(1e-9));
}

TEST_CASE("third-order gradient moments along a lambda ladder are finite") {
  Torus t(3, 16);
  for (std::uint64_t m = 0; m < 2; ++m) {
    EdgeField a = field(t, m);
    auto phi = first_correctors(a, 0.0);
    auto sc = second_correctors(a, phi, 0.56, 0.0);
    auto build = [&](double lambda) {
      return higher_corrector(a, 3, "psi3", {{RhsTerm::Variant::Div, 0, &sc.at(1, 1).field, 1.0}},
                              lambda);
    };
    LadderReport rep = lambda_ladder(build, {1e-1, 1e-2, 1e-3});
    REQUIRE(rep.rungs.size() == 3);
    for (const auto& r : rep.rungs) {
      CHECK(std::isfinite(r.grad_m2));
      CHECK(r.grad_m2 > 0.0);
    }
  }
}

TEST_CASE("lambda ladder bookkeeping") {
  Torus t(2, 8);
  EdgeField c = EdgeField::constant(t, 0.5);
  LadderReport rep = lambda_ladder([&](double l) { return first_corrector(c, 0, l); }, {1e-1, 1e-2});
  CHECK(rep.stabilized);
  CHECK(rep.rungs[1].field_m2 == 0.0);
  CHECK_THROWS_AS(lambda_ladder([&](double l) { return first_corrector(c, 0, l); }, {1e-2, 1e-1}),
                  std::invalid_argument);
}

TEST_CASE("Green-representation sensitivity matches central differences") {
  Torus t(2, 8);
  const double lambda = 1e-2;
  std::mt19937_64 g(11);
  for (bool constant : {true, false}) {
    EdgeField a = constant ? EdgeField::constant(t, 0.6, 0.25) : field(t, 8);
    for (int pair = 0; pair < (constant ? 2 : 10); ++pair) {
      const int k = static_cast<int>(g() % 2);
      const int dir = static_cast<int>(g() % 2);
      const std::size_t x = g() % t.sites();
      const std::size_t y = g() % t.sites();
      Corrector phi = first_corrector(a, k, lambda, tight());
      SiteField formula = sensitivity_green(a, phi, k, dir, x, tight());
      SiteField fd = vertical_difference(
          [&](const EdgeField& b) { return first_corrector(b, k, lambda, tight()).field; }, a, dir, x,
          1e-5);
      const double scale = std::max(std::abs(formula[y]), 1e-3 * formula.max_abs());
      CHECK(std::abs(formula[y] - fd[y]) <= (constant ? 1e-6 : 1e-4) * scale);
    }
  }
  Corrector phi0 = first_corrector(field(t, 9), 0, 0.0);
  CHECK_THROWS_AS(sensitivity_green(field(t, 9), phi0, 0, 0, 0), std::invalid_argument);
}

TEST_CASE("sensitivity decays like |y|^(1-d) in d=3") {
  Torus t(3, 32);
  EdgeField a = field(t, 10);
  Corrector phi = first_corrector(a, 0, 1e-4, {1e-10});
  SiteField s = sensitivity_green(a, phi, 0, 0, 0, {1e-10});
  std::vector<double> lx, ly;
  for (int r = 2; r <= 8; ++r) {
    double acc = 0;
    int c = 0;
    for (std::size_t y = 0; y < t.sites(); ++y) {
      const double d = t.distance(y, 0);
      if (std::abs(d - r) < 0.5) {
        acc += s[y] * s[y];
        ++c;
      }
    }
    lx.push_back(std::log(r));
    ly.push_back(0.5 * std::log(acc / c));
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
  CHECK(std::abs(sxy / sxx + 2.0) <= 0.4);
}

TEST_CASE("spectral-gap ratio for phi(0) is finite and small") {
  Torus t(3, 16);
  const double lambda = 1e-2;
  const int M = 20;
  std::vector<double> v;
  double energy = 0.0;
  for (int m = 0; m < M; ++m) {
    EdgeField a = field(t, 100 + m);
    Corrector phi = first_corrector(a, 0, lambda);
    v.push_back(phi.field[0]);
    energy += sensitivity_energy_at_origin(a, phi, 0) / M;
  }
  double mean = 0, var = 0;
  for (double x : v) mean += x / M;
  for (double x : v) var += (x - mean) * (x - mean) / (M - 1);
  CHECK(energy > 0.0);
  CHECK(var / energy < 10.0);
}

TEST_CASE("quenched bound lies below 1/delta^2") {
  Torus t(3, 8);
  EdgeField a = field(t, 12);
  const double q = quenched_bound(a, 1e-3, 1, 17);
  CHECK(q > 0.0);
  CHECK(q <= 1.0 / (0.25 * 0.25));
  CHECK_THROWS_AS(quenched_bound(field(Torus(3, 17), 0), 1e-3, 0, 0), std::invalid_argument);
}

TEST_CASE("corrector cache round trip") {
  namespace fs = std::filesystem;
  fs::path root = fs::temp_directory_path() / "clab_cache_test";
  fs::remove_all(root);
  CorrectorCache cache(root, "run42");
  Torus t(2, 8);
  EdgeField a = field(t, 13);
  int builds = 0;
  auto build = [&] {
    ++builds;
    return first_corrector(a, 1, 0.0);
  };
  Corrector c1 = cache.get(3, 1, "phi", "2", 0.0, t, build);
  Corrector c2 = cache.get(3, 1, "phi", "2", 0.0, t, build);
  CHECK(builds == 1);
  CHECK(max_abs_diff(c1.field, c2.field) == 0.0);
  CHECK(c2.label == "phi_2");
  CHECK(fs::exists(root / "run42" / "3" / "1_phi_2_0.000000e+00.field"));
  CHECK(fs::exists(root / "run42" / "3" / "1_phi_2_0.000000e+00.field.json"));
  CHECK_THROWS(cache.load(3, 1, "phi", "2", 0.0, Torus(2, 4)));
}
