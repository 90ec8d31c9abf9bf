#include <cmath>
#include <numeric>

#include "clab/ensemble.hpp"
#include "doctest.h"

using namespace clab;

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("law validation") {
  CHECK_THROWS_AS(ConductanceLaw::uniform(0.1, 1.2, 0.1), EnsembleError);
  CHECK_THROWS_AS(ConductanceLaw::uniform(0.05, 1.0, 0.1), EnsembleError);
  CHECK_THROWS_AS(ConductanceLaw::uniform(0.3, 0.3, 0.1), EnsembleError);
  CHECK_THROWS_AS(ConductanceLaw::uniform(0.3, 0.9, 1.0), EnsembleError);
  CHECK_THROWS_AS(ConductanceLaw::two_point_smoothed(0.12, 0.9, 0.5, 0.1, 0.1), EnsembleError);
  CHECK_THROWS_AS(ConductanceLaw::beta_rescaled(-1.0, 2.0, 0.2), EnsembleError);
  CHECK_THROWS_AS(ConductanceLaw::constant(0.05, 0.1), EnsembleError);
  CHECK_NOTHROW(ConductanceLaw::constant(1.0));
}

TEST_CASE("closed-form law moments") {
  auto u = ConductanceLaw::uniform(0.25, 1.0, 0.25);
  CHECK(u.arithmetic_mean() == doctest::Approx(0.625));
  CHECK(u.harmonic_mean() == doctest::Approx(0.75 / std::log(4.0)).epsilon(1e-14));
  // Beta(1,1) rescaled is uniform(delta, 1).
  auto b = ConductanceLaw::beta_rescaled(1.0, 1.0, 0.25);
  CHECK(b.arithmetic_mean() == doctest::Approx(0.625));
  CHECK(b.harmonic_mean() == doctest::Approx(u.harmonic_mean()).epsilon(1e-10));
  CHECK(b.variance() == doctest::Approx(u.variance()));
  // A two-point law whose windows tile (0.2, 0.6) is uniform(0.2, 0.6).
  auto tp = ConductanceLaw::two_point_smoothed(0.3, 0.5, 0.5, 0.2, 0.1);
  auto ut = ConductanceLaw::uniform(0.2, 0.6, 0.1);
  CHECK(tp.arithmetic_mean() == doctest::Approx(ut.arithmetic_mean()));
  CHECK(tp.harmonic_mean() == doctest::Approx(ut.harmonic_mean()).epsilon(1e-13));
  CHECK(tp.variance() == doctest::Approx(ut.variance()));
}

TEST_CASE("sampled moments match each law") {
  Torus t(3, 16);
  for (auto law : {ConductanceLaw::uniform(0.1, 1.0, 0.1),
                   ConductanceLaw::two_point_smoothed(0.3, 0.9, 0.3, 0.05, 0.2),
                   ConductanceLaw::beta_rescaled(0.7, 2.5, 0.2)}) {
    Ensemble ens{law, {77}};
    EdgeField a = sample_field(t, ens, 0);
    const double n = static_cast<double>(t.edges());
    double s = 0.0, sinv = 0.0;
    for (double w : a.values()) {
      s += w;
      sinv += 1.0 / w;
      CHECK(w > law.delta);
      CHECK(w < 1.0);
    }
    const double se = std::sqrt(law.variance() / n);
    CHECK(std::abs(s / n - law.arithmetic_mean()) < 3.0 * se);
    CHECK(std::abs(n / sinv - law.harmonic_mean()) < 0.02 * law.harmonic_mean());
  }
}

TEST_CASE("sampling is a pure function of (seed, realization)") {
  Torus t(2, 8);
  Ensemble ens{ConductanceLaw::uniform(0.25, 1.0, 0.25), {5}};
  EdgeField a = sample_field(t, ens, 3);
  EdgeField b = sample_field(t, ens, 3);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  EdgeField c = sample_field(t, ens, 4);
  CHECK_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
  Ensemble other{ens.law, {6}};
  EdgeField d = sample_field(t, other, 3);
  CHECK_FALSE(std::equal(a.values().begin(), a.values().end(), d.values().begin()));
}

TEST_CASE("constant law gives a constant field") {
  Torus t(3, 4);
  EdgeField a = sample_field(t, {ConductanceLaw::constant(0.7), {1}}, 0);
  CHECK(a.is_constant());
  CHECK(a.at(2, 5) == 0.7);
}

TEST_CASE("extend_field keeps shared-coordinate edges") {
  Torus t(3, 8);
  Ensemble ens{ConductanceLaw::uniform(0.25, 1.0, 0.25), {11}};
  EdgeField a = sample_field(t, ens, 2);
  EdgeField b = extend_field(a, 16, ens, 2);
  CHECK(b.torus().side_sites() == 16);
  for (std::size_t s = 0; s < t.sites(); ++s) {
    for (int i = 0; i < 3; ++i) CHECK(b.at(i, b.torus().index(t.coords(s))) == a.at(i, s));
  }
  EdgeField same = extend_field(a, 8, ens, 2);
  CHECK(std::equal(a.values().begin(), a.values().end(), same.values().begin()));
  Ensemble wrong{ens.law, {12}};
  CHECK_THROWS_AS(extend_field(a, 16, wrong, 2), EnsembleError);
}

TEST_CASE("distinct edges are empirically uncorrelated") {
  Torus t(2, 4);
  Ensemble ens{ConductanceLaw::uniform(0.25, 1.0, 0.25), {2024}};
  const int M = 200;
  std::vector<double> x(M), y(M), z(M);
  for (int m = 0; m < M; ++m) {
    EdgeField a = sample_field(t, ens, m);
    x[m] = a.at(0, 0);
    y[m] = a.at(1, 0);
    z[m] = a.at(0, 5);
  }
  auto corr = [&](const std::vector<double>& p, const std::vector<double>& q) {
    const double mp = std::accumulate(p.begin(), p.end(), 0.0) / M;
    const double mq = std::accumulate(q.begin(), q.end(), 0.0) / M;
    double c = 0, vp = 0, vq = 0;
    for (int m = 0; m < M; ++m) {
      c += (p[m] - mp) * (q[m] - mq);
      vp += (p[m] - mp) * (p[m] - mp);
      vq += (q[m] - mq) * (q[m] - mq);
    }
    return c / std::sqrt(vp * vq);
  };
  CHECK(std::abs(corr(x, y)) <= 3.0 / std::sqrt(M));
  CHECK(std::abs(corr(x, z)) <= 3.0 / std::sqrt(M));
}

TEST_CASE("translation of the torus permutes the edge multiset") {
  // Shifting the torus maps edges to edges; the empirical law is unchanged.
  Torus t(2, 8);
  EdgeField a = sample_field(t, {ConductanceLaw::uniform(0.25, 1.0, 0.25), {3}}, 0);
  std::vector<double> orig(a.values().begin(), a.values().end());
  std::vector<double> moved;
  for (int i = 0; i < 2; ++i) {
    for (std::size_t s = 0; s < t.sites(); ++s) moved.push_back(a.at(i, t.shifted(s, {3, 5})));
  }
  std::sort(orig.begin(), orig.end());
  std::sort(moved.begin(), moved.end());
  CHECK(orig == moved);
}

TEST_CASE("vertical difference of trivial functionals") {
  Torus t(2, 4);
  EdgeField a = sample_field(t, {ConductanceLaw::uniform(0.25, 1.0, 0.25), {9}}, 0);
  auto own = [&](const EdgeField& b) { return SiteField(b.torus(), b.at(1, 6)); };
  auto other = [&](const EdgeField& b) { return SiteField(b.torus(), b.at(0, 2)); };
  CHECK(vertical_difference(own, a, 1, 6, 1e-5)[0] == 1.0);
  CHECK(vertical_difference(other, a, 1, 6, 1e-5)[0] == 0.0);
  EdgeField edge = a.with_edge(1, 6, 0.2500001);
  CHECK_THROWS_AS(vertical_difference(own, edge, 1, 6, 1e-5), EnsembleError);
}
