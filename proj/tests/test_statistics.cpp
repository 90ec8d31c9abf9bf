#include <algorithm>
#include <cmath>
#include <random>

#include "clab/statistics.hpp"
#include "doctest.h"

using namespace clab;

namespace {

const Ensemble kEns{ConductanceLaw::uniform(0.25, 1.0, 0.25), {777}};

}  // namespace

TEST_CASE("mean estimate and jackknife") {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  MomentEstimate e = mean_estimate(v);
  CHECK(e.mean == 2.5);
  CHECK(e.stderr_ == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
  auto mean = [](const std::vector<double>& s) {
    double a = 0;
    for (double x : s) a += x;
    return a / s.size();
  };
  CHECK(jackknife_se(v, mean) == doctest::Approx(e.stderr_));
  CHECK_THROWS_AS(mean_estimate({1.0}), std::invalid_argument);
}

TEST_CASE("moment estimates are invariant under relabeling") {
  std::mt19937_64 g(3);
  std::vector<double> v(101);
  for (double& x : v) x = std::exp(std::normal_distribution<>(0, 3)(g));
  MomentEstimate a = mean_estimate(v);
  std::shuffle(v.begin(), v.end(), g);
  MomentEstimate b = mean_estimate(v);
  CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-15));
  CHECK(a.stderr_ == doctest::Approx(b.stderr_).epsilon(1e-12));
}

TEST_CASE("norm_2eps") {
  Torus t(3, 8, 1.0);
  const double eps = t.mesh();
  NormEstimate one = norm_2eps({SiteField(t, 1.0), SiteField(t, 1.0)}, eps);
  CHECK(one.value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(one.stderr_ == 0.0);
  CHECK(norm_2eps({SiteField(t)}, eps).value == 0.0);
  SiteField bump(t);
  for (std::size_t x = 0; x < t.sites(); ++x) bump[x] = std::exp(-t.distance(x, 0));
  NormEstimate b1 = norm_2eps({bump}, eps);
  NormEstimate b10 = norm_2eps(std::vector<SiteField>(10, bump), eps);
  CHECK(b1.value == doctest::Approx(b10.value).epsilon(1e-15));
  CHECK(b10.stderr_ <= 1e-15 * b10.value);
  CHECK_THROWS_AS(norm_2eps({}, eps), std::invalid_argument);

  std::mt19937_64 g(4);
  auto rnd = [&] {
    SiteField f(t);
    for (std::size_t x = 0; x < t.sites(); ++x) f[x] = std::normal_distribution<>()(g);
    return f;
  };
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<SiteField> f, h, fh, sf;
    for (int m = 0; m < 4; ++m) {
      f.push_back(rnd());
      h.push_back(rnd());
      fh.push_back(f.back() + h.back());
      sf.push_back(-2.5 * f.back());
    }
    CHECK(norm_2eps(fh, eps).value <= norm_2eps(f, eps).value + norm_2eps(h, eps).value + 1e-14);
    CHECK(norm_2eps(sf, eps).value == doctest::Approx(2.5 * norm_2eps(f, eps).value));
  }
}

TEST_CASE("rate regression recovers planted slopes") {
  std::vector<double> eps{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  std::vector<double> err;
  for (double e : eps) err.push_back(3.0 * std::pow(e, 1.5));
  RateFit f = rate_regression(eps, err);
  CHECK(std::abs(f.slope - 1.5) <= 1e-12);
  CHECK(std::abs(f.intercept - std::log(3.0)) <= 1e-10);
  CHECK(f.half_width <= 1e-10);

  std::mt19937_64 g(9);
  std::vector<double> noisy;
  for (double e : eps) noisy.push_back(e * (1.0 + 0.01 * std::normal_distribution<>()(g)));
  RateFit fn = rate_regression(eps, noisy);
  CHECK(std::abs(fn.slope - 1.0) < 0.03);
  CHECK(fn.half_width < 0.05);
  CHECK(fn.half_width > 0.0);

  RateFit fc = rate_regression(eps, {2.0, 2.0, 2.0, 2.0});
  CHECK(std::abs(fc.slope) < 1e-14);

  CHECK_THROWS_AS(rate_regression({1, 2}, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(rate_regression(eps, {1, 0, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(rate_regression({1, 3, 2}, {1, 2, 3}), std::invalid_argument);
  // Deterministic given the seed.
  CHECK(rate_regression(eps, noisy).half_width == fn.half_width);
}

TEST_CASE("Bonferroni quantiles") {
  CHECK(bonferroni_z(1) == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(bonferroni_z(1, 0.05) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK(bonferroni_z(27) == doctest::Approx(3.8864).epsilon(1e-3));
  CHECK(bonferroni_t(1, 10, 0.05) == doctest::Approx(2.228139).epsilon(1e-6));
  CHECK(bonferroni_t(5, 100000) == doctest::Approx(bonferroni_z(5)).epsilon(1e-3));
  CHECK(bonferroni_t(1000, 7) > bonferroni_z(1000));
}

TEST_CASE("moment scan: constant coefficients and failure bookkeeping") {
  Torus t(2, 8);
  EdgeField c = EdgeField::constant(t, 0.5);
  MomentScan s = moment_scan([&](double l, int) { return first_corrector(c, 0, l); }, {2, 4},
                             {1e-1, 1e-2}, 3);
  CHECK(s.estimates.size() == 8);
  for (const auto& e : s.estimates) CHECK(e.mean == 0.0);
  MomentScan f = moment_scan(
      [&](double l, int m) -> Corrector {
        if (m == 1) throw SolveError("synthetic", {});
        return first_corrector(sample_field(t, kEns, m), 0, l);
      },
      {2}, {1e-1}, 4);
  CHECK(f.failures.size() == 1);
  CHECK(f.estimates.front().M == 3);
}

TEST_CASE("correlation decay: white noise, lag-zero identity") {
  Torus t(3, 16);
  std::mt19937_64 g(5);
  std::vector<SiteField> noise;
  for (int m = 0; m < 20; ++m) {
    SiteField f(t);
    for (std::size_t x = 0; x < t.sites(); ++x) f[x] = std::normal_distribution<>()(g);
    noise.push_back(f);
  }
  CorrelationReport w = correlation_decay(noise, {0, 1, 2, 3, 4}, {0, 1, 2});
  CHECK(w.lags[0].mean == doctest::Approx(1.0).epsilon(0.05));
  for (std::size_t k = 1; k < w.lags.size(); ++k) CHECK(std::abs(w.lags[k].mean) < 0.02);
  CHECK_THROWS_AS(correlation_decay(noise, {5}, {0}), std::invalid_argument);

  // Lag 0 in reference-site mode is the second moment of psi(0) from moment_scan.
  std::vector<EdgeField> fields;
  std::vector<SiteField> phis;
  for (int m = 0; m < 6; ++m) {
    fields.push_back(sample_field(t, kEns, m));
    phis.push_back(first_corrector(fields.back(), 0, 1e-2).field);
  }
  CorrelationReport r = correlation_decay(phis, {0, 1}, {1, 2}, CorrelationMode::ReferenceSite);
  MomentScan ms = moment_scan([&](double l, int m) { return first_corrector(fields[m], 0, l); }, {2},
                              {1e-2}, 6);
  CHECK(std::abs(r.lags[0].mean - ms.estimates[0].mean) <= 1e-12 * ms.estimates[0].mean);
  CHECK(r.lags[0].mean > 0.0);
}

TEST_CASE("sublinearity detector") {
  std::vector<double> eps{1.0 / 4, 1.0 / 8, 1.0 / 16};
  const std::vector<double> x{0.5, 0.25, 0.0};
  auto linear = [&](int r, int) {
    const int L = static_cast<int>(std::lround(4.0 / eps[r]));
    Torus t(3, L);
    SiteField f(t);
    for (std::size_t s = 0; s < t.sites(); ++s) {
      int c = t.coords(s)[0];
      f[s] = c <= L / 2 ? c : c - L;
    }
    return f;
  };
  SublinearityReport lin = sublinearity_check(eps, x, 2, linear);
  CHECK(lin.scaled[0].mean == doctest::Approx(lin.scaled[2].mean));
  CHECK_FALSE(lin.sublinear);

  auto zero = [&](int r, int) { return SiteField(Torus(3, static_cast<int>(4.0 / eps[r]))); };
  SublinearityReport z = sublinearity_check(eps, x, 2, zero);
  CHECK(z.scaled[1].mean == 0.0);
  CHECK_FALSE(z.fit.has_value());

  auto bounded = [&](int r, int m) {
    Torus t(3, static_cast<int>(std::lround(4.0 / eps[r])));
    SiteField f(t, 1.0 + m);
    f[0] = 0.0;
    return f;
  };
  SublinearityReport b = sublinearity_check(eps, x, 3, bounded);
  CHECK(b.sublinear);
  CHECK(b.fit->slope == doctest::Approx(2.0));
  CHECK_THROWS_AS(sublinearity_check({0.5, 0.25}, x, 2, zero), std::invalid_argument);
  auto unanchored = [&](int r, int) { return SiteField(Torus(3, static_cast<int>(4.0 / eps[r])), 1.0); };
  CHECK_THROWS_AS(sublinearity_check(eps, x, 2, unanchored), std::invalid_argument);
}

TEST_CASE("Green decay scan for a = 1 in d=3") {
  Torus t(3, 32);
  GreenDecayReport r =
      green_decay_scan(EdgeField::constant(t, 1.0), 1e-4, 2, {2, 3, 4, 5, 6, 7, 8}, {1e-11});
  CHECK(std::abs(r.grad_fit.slope + 2.0) <= 0.3);
  CHECK(std::abs(r.hess_fit.slope + 3.0) <= 0.3);
  CHECK_THROWS_AS(green_decay_scan(EdgeField::constant(t, 1.0), 1e-4, 2, {2, 9}), std::invalid_argument);
}
