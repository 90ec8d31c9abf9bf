#include "clab/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/distributions/students_t.hpp>

#include "clab/summation.hpp"

namespace clab {

namespace {

double compensated_mean(const std::vector<double>& v) {
  CompensatedSum s;
  for (double x : v) s.add(x);
  return s.value() / static_cast<double>(v.size());
}

struct Ols {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

Ols ols(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  Ols o;
  o.slope = sxy / sxx;
  o.intercept = my - o.slope * mx;
  o.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return o;
}

}  // namespace

MomentEstimate mean_estimate(const std::vector<double>& samples, std::string quantity, int p) {
  if (samples.size() < 2) throw std::invalid_argument("moment estimate needs M >= 2");
  MomentEstimate e;
  e.quantity = std::move(quantity);
  e.p = p;
  e.M = static_cast<int>(samples.size());
  e.mean = compensated_mean(samples);
  CompensatedSum ss;
  for (double x : samples) ss.add((x - e.mean) * (x - e.mean));
  e.stderr_ = std::sqrt(ss.value() / (e.M - 1) / e.M);
  return e;
}

double jackknife_se(const std::vector<double>& samples,
                    const std::function<double(const std::vector<double>&)>& estimator) {
  const std::size_t M = samples.size();
  if (M < 2) return 0.0;
  std::vector<double> theta(M);
  std::vector<double> rest(M - 1);
  for (std::size_t i = 0; i < M; ++i) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < M; ++j) {
      if (j != i) rest[k++] = samples[j];
    }
    theta[i] = estimator(rest);
  }
  const double mean = compensated_mean(theta);
  CompensatedSum ss;
  for (double t : theta) ss.add((t - mean) * (t - mean));
  return std::sqrt(static_cast<double>(M - 1) / static_cast<double>(M) * ss.value());
}

double eps_energy(const SiteField& f, double eps) {
  return std::pow(eps, f.torus().dim()) * inner(f, f);
}

NormEstimate norm_2eps_from_energies(const std::vector<double>& energies) {
  if (energies.empty()) throw std::invalid_argument("norm_2eps needs at least one sample");
  auto est = [](const std::vector<double>& e) { return std::sqrt(compensated_mean(e)); };
  NormEstimate n;
  n.M = static_cast<int>(energies.size());
  n.value = est(energies);
  n.stderr_ = jackknife_se(energies, est);
  return n;
}

NormEstimate norm_2eps(const std::vector<SiteField>& samples, double eps) {
  if (samples.empty()) throw std::invalid_argument("norm_2eps needs at least one sample");
  std::vector<double> e;
  for (const auto& f : samples) {
    if (!f.torus().same_sites(samples.front().torus())) {
      throw LatticeError("norm_2eps samples live on different tori");
    }
    e.push_back(eps_energy(f, eps));
  }
  return norm_2eps_from_energies(e);
}

RateFit rate_regression(const std::vector<double>& x, const std::vector<double>& y, int bootstrap,
                        std::uint64_t seed) {
  if (x.size() != y.size()) throw std::invalid_argument("rate regression: size mismatch");
  if (x.size() < 3) throw std::invalid_argument("rate regression needs at least three points");
  const bool inc = x[1] > x[0];
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (inc ? !(x[i] > x[i - 1]) : !(x[i] < x[i - 1])) {
      throw std::invalid_argument("rate regression abscissas must be strictly monotone");
    }
  }
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw std::invalid_argument("rate regression needs positive abscissas and ordinates");
    }
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  RateFit f;
  f.x = x;
  f.y = y;
  const Ols o = ols(lx, ly);
  f.slope = o.slope;
  f.intercept = o.intercept;
  f.r2 = o.r2;
  std::vector<double> fitted(lx.size()), resid(lx.size());
  for (std::size_t i = 0; i < lx.size(); ++i) {
    fitted[i] = o.intercept + o.slope * lx[i];
    resid[i] = ly[i] - fitted[i];
  }
  if (bootstrap > 0) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, resid.size() - 1);
    std::vector<double> slopes(bootstrap);
    std::vector<double> yb(ly.size());
    for (int b = 0; b < bootstrap; ++b) {
      for (std::size_t i = 0; i < yb.size(); ++i) yb[i] = fitted[i] + resid[pick(rng)];
      slopes[b] = ols(lx, yb).slope;
    }
    std::sort(slopes.begin(), slopes.end());
    const auto q = [&](double p) {
      return slopes[static_cast<std::size_t>(std::floor(p * (bootstrap - 1)))];
    };
    f.half_width = 0.5 * (q(0.975) - q(0.025));
  }
  return f;
}

// ---------------------------------------------------------------------------

MomentScan moment_scan(const std::function<Corrector(double, int)>& build, const std::vector<int>& ps,
                       const std::vector<double>& lambdas, int M, const std::string& label) {
  if (M < 2) throw std::invalid_argument("moment scan needs M >= 2");
  MomentScan scan;
  for (double lambda : lambdas) {
    std::vector<std::vector<double>> fv(ps.size()), gv(ps.size());
    int d = 0, L = 0;
    for (int m = 0; m < M; ++m) {
      try {
        Corrector c = build(lambda, m);
        d = c.field.torus().dim();
        L = c.field.torus().side_sites();
        double g2 = 0.0;
        for (int i = 0; i < d; ++i) g2 += c.gradient.at(i, 0) * c.gradient.at(i, 0);
        for (std::size_t k = 0; k < ps.size(); ++k) {
          fv[k].push_back(std::pow(std::abs(c.field[0]), ps[k]));
          gv[k].push_back(std::pow(g2, 0.5 * ps[k]));
        }
      } catch (const SolveError& e) {
        scan.failures.push_back({lambda, m, e.what()});
      }
    }
    for (std::size_t k = 0; k < ps.size(); ++k) {
      if (fv[k].size() < 2) continue;
      for (auto* pair : {&fv[k], &gv[k]}) {
        MomentEstimate e =
            mean_estimate(*pair, label + (pair == &fv[k] ? "_field" : "_grad"), ps[k]);
        e.d = d;
        e.L = L;
        e.param = lambda;
        scan.estimates.push_back(e);
      }
    }
  }
  return scan;
}

// ---------------------------------------------------------------------------

CorrelationReport correlation_decay(const std::vector<SiteField>& samples,
                                    const std::vector<int>& lags, const std::vector<int>& axes,
                                    CorrelationMode mode) {
  if (samples.size() < 2) throw std::invalid_argument("correlation decay needs M >= 2");
  if (axes.empty()) throw std::invalid_argument("correlation decay needs at least one axis");
  const Torus& t = samples.front().torus();
  for (int r : lags) {
    if (r < 0 || 4 * r > t.side_sites()) {
      throw std::invalid_argument("correlation lags must lie in [0, L/4]");
    }
  }
  for (int i : axes) {
    if (i < 0 || i >= t.dim()) throw std::invalid_argument("correlation axis out of range");
  }
  CorrelationReport rep;
  std::vector<std::vector<double>> per_lag(lags.size());
  for (const SiteField& f : samples) {
    if (!f.torus().same_sites(t)) throw LatticeError("correlation samples on different tori");
    for (std::size_t k = 0; k < lags.size(); ++k) {
      const int r = lags[k];
      CompensatedSum acc;
      for (int i : axes) {
        if (mode == CorrelationMode::Spatial) {
          const SiteField g = shift(f, unit(i, r));
          acc.add(inner(f, g) / static_cast<double>(t.sites()));
        } else {
          acc.add(0.5 * f[0] * (f[t.index(unit(i, r))] + f[t.index(unit(i, -r))]));
        }
      }
      per_lag[k].push_back(acc.value() / static_cast<double>(axes.size()));
    }
  }
  std::vector<double> fx, fy;
  for (std::size_t k = 0; k < lags.size(); ++k) {
    const MomentEstimate e = mean_estimate(per_lag[k]);
    CorrelationLag c{lags[k], e.mean, e.stderr_, false};
    if (std::abs(e.mean) <= 2.0 * e.stderr_) {
      c.dropped = true;
      rep.warnings.push_back("lag " + std::to_string(lags[k]) +
                             " dropped: correlation within 2 standard errors of 0");
    } else if (lags[k] > 0) {
      fx.push_back(lags[k]);
      fy.push_back(std::abs(e.mean));
    }
    rep.lags.push_back(c);
  }
  if (fx.size() >= 3) {
    rep.fit = rate_regression(fx, fy);
  } else {
    rep.warnings.push_back("fewer than three usable lags; no fit");
  }
  return rep;
}

// ---------------------------------------------------------------------------

SublinearityReport sublinearity_check(const std::vector<double>& eps,
                                      const std::vector<double>& x_phys, int M,
                                      const std::function<SiteField(int, int)>& field) {
  if (eps.size() < 3) throw std::invalid_argument("sublinearity check needs at least 3 rungs");
  SublinearityReport rep;
  rep.eps = eps;
  for (std::size_t r = 0; r < eps.size(); ++r) {
    std::vector<double> scaled, raw;
    double y2 = 0.0;
    for (int m = 0; m < M; ++m) {
      const SiteField f = field(static_cast<int>(r), m);
      const Torus& t = f.torus();
      if (std::abs(f[0]) > 1e-12 * std::max(f.max_abs(), 1e-300)) {
        throw std::invalid_argument("sublinearity check needs the anchored gauge psi(0) = 0");
      }
      Coord y{};
      y2 = 0.0;
      for (int i = 0; i < t.dim(); ++i) {
        y[i] = static_cast<int>(std::lround(x_phys.at(i) / eps[r]));
        y2 += static_cast<double>(y[i]) * y[i];
      }
      const double v = f[t.index(y)];
      scaled.push_back(eps[r] * eps[r] * v * v);
      raw.push_back(v * v);
    }
    MomentEstimate e = mean_estimate(scaled, "eps_psi_sq", 2);
    e.param = eps[r];
    rep.scaled.push_back(e);
    rep.max_growth_ratio = std::max(rep.max_growth_ratio, compensated_mean(raw) / (1.0 + y2));
  }
  rep.monotone = true;
  for (std::size_t r = 1; r < rep.scaled.size(); ++r) {
    rep.monotone = rep.monotone && rep.scaled[r].mean <= rep.scaled[r - 1].mean;
  }
  rep.halved = rep.scaled.back().mean < 0.5 * rep.scaled.front().mean;
  rep.sublinear = rep.monotone && rep.halved;
  bool positive = true;
  std::vector<double> ys;
  for (const auto& e : rep.scaled) {
    positive = positive && e.mean > 0.0;
    ys.push_back(e.mean);
  }
  if (positive) rep.fit = rate_regression(eps, ys);
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

struct Shells {
  std::vector<std::vector<std::size_t>> members;
};

Shells make_shells(const Torus& t, const std::vector<double>& radii) {
  Shells s;
  s.members.resize(radii.size());
  for (std::size_t y = 0; y < t.sites(); ++y) {
    const double d = t.distance(y, 0);
    for (std::size_t k = 0; k < radii.size(); ++k) {
      if (std::abs(d - radii[k]) < 0.5) s.members[k].push_back(y);
    }
  }
  return s;
}

void shell_samples(const SiteField& v, const Shells& sh, int p, std::vector<std::vector<double>>& g,
                   std::vector<std::vector<double>>& h) {
  const Torus& t = v.torus();
  const VectorField dv = grad(v);
  for (std::size_t k = 0; k < sh.members.size(); ++k) {
    CompensatedSum sg, shh;
    for (std::size_t y : sh.members[k]) {
      double g2 = 0.0;
      for (int i = 0; i < t.dim(); ++i) g2 += dv.at(i, y) * dv.at(i, y);
      sg.add(std::pow(std::abs(v[y]), p));
      shh.add(std::pow(g2, 0.5 * p));
    }
    const double n = static_cast<double>(sh.members[k].size());
    g[k].push_back(sg.value() / n);
    h[k].push_back(shh.value() / n);
  }
}

GreenDecayReport finish_scan(const std::vector<double>& radii, int p, int d, int L,
                             const std::vector<std::vector<double>>& g,
                             const std::vector<std::vector<double>>& h) {
  GreenDecayReport rep;
  rep.radii = radii;
  auto pnorm = [p](const std::vector<double>& v) { return std::pow(compensated_mean(v), 1.0 / p); };
  std::vector<double> gy, hy;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    for (int which = 0; which < 2; ++which) {
      const auto& v = which == 0 ? g[k] : h[k];
      MomentEstimate e;
      e.quantity = which == 0 ? "grad_G" : "grad_grad_G";
      e.p = p;
      e.M = static_cast<int>(v.size());
      e.mean = pnorm(v);
      e.stderr_ = jackknife_se(v, pnorm);
      e.d = d;
      e.L = L;
      e.param = radii[k];
      if (e.M > 1 && e.stderr_ > 0.3 * e.mean) {
        rep.warnings.push_back(e.quantity + " at radius " + std::to_string(radii[k]) +
                               ": standard error above 30% of the estimate");
      }
      (which == 0 ? rep.grad : rep.hess).push_back(e);
      (which == 0 ? gy : hy).push_back(e.mean);
    }
  }
  rep.grad_fit = rate_regression(radii, gy);
  rep.hess_fit = rate_regression(radii, hy);
  return rep;
}

void check_radii(const Torus& t, const std::vector<double>& radii, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("Green decay scan needs lambda > 0");
  for (double r : radii) {
    if (r <= 0.0 || 4.0 * r > t.side_sites()) {
      throw std::invalid_argument("Green decay radii must lie in (0, L/4]");
    }
  }
}

}  // namespace

GreenDecayReport green_decay_scan(const Torus& t, const Ensemble& ens, double lambda, int p,
                                  const std::vector<double>& radii, int M,
                                  const SolverSettings& s) {
  check_radii(t, radii, lambda);
  const Shells sh = make_shells(t, radii);
  std::vector<std::vector<double>> g(radii.size()), h(radii.size());
  for (int m = 0; m < M; ++m) {
    const EdgeField a = sample_field(t, ens, m);
    const SiteField v = green_dipole(OperatorSpec::hetero(a, lambda), t, 0, 0, s);
    shell_samples(v, sh, p, g, h);
  }
  return finish_scan(radii, p, t.dim(), t.side_sites(), g, h);
}

GreenDecayReport green_decay_scan(const EdgeField& a, double lambda, int p,
                                  const std::vector<double>& radii, const SolverSettings& s) {
  const Torus& t = a.torus();
  check_radii(t, radii, lambda);
  const Shells sh = make_shells(t, radii);
  std::vector<std::vector<double>> g(radii.size()), h(radii.size());
  const SiteField v = green_dipole(OperatorSpec::hetero(a, lambda), t, 0, 0, s);
  shell_samples(v, sh, p, g, h);
  return finish_scan(radii, p, t.dim(), t.side_sites(), g, h);
}

double bonferroni_t(int n, int dof, double alpha) {
  if (n < 1 || dof < 1 || !(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("bonferroni_t: bad input");
  }
  const boost::math::students_t dist(dof);
  return boost::math::quantile(boost::math::complement(dist, alpha / (2.0 * n)));
}

double bonferroni_z(int n, double alpha) {
  if (n < 1 || !(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("bonferroni_z: bad input");
  const double target = alpha / n;
  double lo = 0.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (std::erfc(mid / std::sqrt(2.0)) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace clab
