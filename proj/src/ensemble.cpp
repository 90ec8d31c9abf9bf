#include "clab/ensemble.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <sstream>
#include <vector>

namespace clab {

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c,
                                        std::array<std::uint32_t, 2> k) {
  constexpr std::uint64_t M0 = 0xD2511F53u;
  constexpr std::uint64_t M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u;
  constexpr std::uint32_t W1 = 0xBB67AE85u;
  for (int r = 0; r < 10; ++r) {
    const std::uint64_t p0 = M0 * c[0];
    const std::uint64_t p1 = M1 * c[2];
    c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
         static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    k[0] += W0;
    k[1] += W1;
  }
  return c;
}

// ---------------------------------------------------------------------------

ConductanceLaw ConductanceLaw::uniform(double lo, double hi, double delta) {
  ConductanceLaw l;
  l.kind = Kind::Uniform;
  l.lo = lo;
  l.hi = hi;
  l.delta = delta;
  l.validate();
  return l;
}

ConductanceLaw ConductanceLaw::two_point_smoothed(double p1, double p2, double weight,
                                                  double width, double delta) {
  ConductanceLaw l;
  l.kind = Kind::TwoPointSmoothed;
  l.p1 = p1;
  l.p2 = p2;
  l.weight = weight;
  l.width = width;
  l.delta = delta;
  l.validate();
  return l;
}

ConductanceLaw ConductanceLaw::beta_rescaled(double alpha, double beta, double delta) {
  ConductanceLaw l;
  l.kind = Kind::BetaRescaled;
  l.alpha = alpha;
  l.beta = beta;
  l.delta = delta;
  l.validate();
  return l;
}

ConductanceLaw ConductanceLaw::constant(double value, double delta) {
  ConductanceLaw l;
  l.kind = Kind::Constant;
  l.value = value;
  l.delta = delta;
  l.validate();
  return l;
}

void ConductanceLaw::validate() const {
  if (!(delta >= 0.0 && delta < 1.0)) throw EnsembleError("delta must lie in [0, 1)");
  switch (kind) {
    case Kind::Uniform:
      if (!(lo >= delta && lo < hi && hi <= 1.0)) {
        throw EnsembleError("uniform law needs delta <= lo < hi <= 1");
      }
      break;
    case Kind::TwoPointSmoothed:
      if (!(width > 0.0 && weight >= 0.0 && weight <= 1.0)) {
        throw EnsembleError("two-point law needs width > 0 and weight in [0, 1]");
      }
      if (!(p1 - width / 2 >= delta && p2 - width / 2 >= delta && p1 + width / 2 <= 1.0 &&
            p2 + width / 2 <= 1.0)) {
        throw EnsembleError("two-point law windows must stay inside [delta, 1]");
      }
      break;
    case Kind::BetaRescaled:
      if (!(alpha > 0.0 && beta > 0.0)) throw EnsembleError("beta law needs positive shapes");
      if (!(delta > 0.0)) throw EnsembleError("beta-rescaled law needs delta > 0");
      break;
    case Kind::Constant:
      if (!(value > delta && value <= 1.0)) {
        throw EnsembleError("constant law value must lie in (delta, 1]");
      }
      break;
  }
}

double ConductanceLaw::sample(double u1, double u2) const {
  switch (kind) {
    case Kind::Uniform:
      return lo + (hi - lo) * u1;
    case Kind::TwoPointSmoothed: {
      const double c = u2 < weight ? p1 : p2;
      return c + width * (u1 - 0.5);
    }
    case Kind::BetaRescaled:
      return delta + (1.0 - delta) * boost::math::ibeta_inv(alpha, beta, u1);
    case Kind::Constant:
      return value;
  }
  return value;
}

namespace {

double beta_inverse_moment(const ConductanceLaw& l) {
  // <1/omega> for omega = delta + (1-delta) B; B ~ Beta(alpha, beta).
  boost::math::quadrature::tanh_sinh<double> q;
  const double lb = boost::math::beta(l.alpha, l.beta);
  auto f = [&](double t) {
    return std::pow(t, l.alpha - 1.0) * std::pow(1.0 - t, l.beta - 1.0) /
           (lb * (l.delta + (1.0 - l.delta) * t));
  };
  return q.integrate(f, 0.0, 1.0);
}

double window_inverse(double c, double w) { return std::log((c + w / 2) / (c - w / 2)) / w; }

}  // namespace

double ConductanceLaw::arithmetic_mean() const {
  switch (kind) {
    case Kind::Uniform:
      return 0.5 * (lo + hi);
    case Kind::TwoPointSmoothed:
      return weight * p1 + (1.0 - weight) * p2;
    case Kind::BetaRescaled:
      return delta + (1.0 - delta) * alpha / (alpha + beta);
    case Kind::Constant:
      return value;
  }
  return value;
}

double ConductanceLaw::harmonic_mean() const {
  switch (kind) {
    case Kind::Uniform:
      return (hi - lo) / std::log(hi / lo);
    case Kind::TwoPointSmoothed:
      return 1.0 / (weight * window_inverse(p1, width) + (1.0 - weight) * window_inverse(p2, width));
    case Kind::BetaRescaled:
      return 1.0 / beta_inverse_moment(*this);
    case Kind::Constant:
      return value;
  }
  return value;
}

double ConductanceLaw::variance() const {
  switch (kind) {
    case Kind::Uniform:
      return (hi - lo) * (hi - lo) / 12.0;
    case Kind::TwoPointSmoothed: {
      const double m = arithmetic_mean();
      const double second = weight * (p1 * p1) + (1.0 - weight) * (p2 * p2) + width * width / 12.0;
      return second - m * m;
    }
    case Kind::BetaRescaled: {
      const double s = alpha + beta;
      return (1.0 - delta) * (1.0 - delta) * alpha * beta / (s * s * (s + 1.0));
    }
    case Kind::Constant:
      return 0.0;
  }
  return 0.0;
}

std::string ConductanceLaw::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind) {
    case Kind::Uniform:
      os << "uniform(" << lo << "," << hi << ")";
      break;
    case Kind::TwoPointSmoothed:
      os << "two-point-smoothed(" << p1 << "," << p2 << "," << weight << "," << width << ")";
      break;
    case Kind::BetaRescaled:
      os << "beta-rescaled(" << alpha << "," << beta << ")";
      break;
    case Kind::Constant:
      os << "constant(" << value << ")";
      break;
  }
  os << " delta=" << delta;
  return os.str();
}

// ---------------------------------------------------------------------------

std::array<double, 2> edge_uniforms(const SeedPlan& plan, std::uint64_t m, const Coord& x,
                                    int dir) {
  std::uint64_t packed = 0;
  for (int i = 0; i < kMaxDim; ++i) {
    packed |= static_cast<std::uint64_t>(x[i] & 0xfff) << (12 * i);
  }
  packed |= static_cast<std::uint64_t>(dir & 0x7) << 60;
  const std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(packed),
                                         static_cast<std::uint32_t>(packed >> 32),
                                         static_cast<std::uint32_t>(m),
                                         static_cast<std::uint32_t>(m >> 32)};
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(plan.master),
                                         static_cast<std::uint32_t>(plan.master >> 32)};
  const auto r = philox4x32(ctr, key);
  auto to_open = [](std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  };
  return {to_open(r[0], r[1]), to_open(r[2], r[3])};
}

EdgeField sample_field(const Torus& t, const Ensemble& ens, std::uint64_t m) {
  ens.law.validate();
  if (t.side_sites() > 4096) throw EnsembleError("edge keying supports L <= 4096");
  const std::size_t n = t.sites();
  std::vector<double> v(t.edges());
  const std::ptrdiff_t ns = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < ns; ++s) {
    const Coord x = t.coords(static_cast<std::size_t>(s));
    for (int i = 0; i < t.dim(); ++i) {
      const auto u = edge_uniforms(ens.seeds, m, x, i);
      v[i * n + s] = ens.law.sample(u[0], u[1]);
    }
  }
  return EdgeField(t, ens.law.delta, std::move(v));
}

EdgeField extend_field(const EdgeField& base, int L_new, const Ensemble& ens, std::uint64_t m) {
  const Torus& t = base.torus();
  if (L_new < t.side_sites()) throw EnsembleError("extend_field needs L' >= L");
  if (L_new == t.side_sites()) return base;
  Torus big(t.dim(), L_new, t.side() * L_new / t.side_sites());
  EdgeField out = sample_field(big, ens, m);
  for (std::size_t s = 0; s < t.sites(); ++s) {
    const std::size_t S = big.index(t.coords(s));
    for (int i = 0; i < t.dim(); ++i) {
      if (out.at(i, S) != base.at(i, s)) {
        throw EnsembleError("extend_field: base field was not sampled from this seed plan");
      }
    }
  }
  return out;
}

SiteField vertical_difference(const std::function<SiteField(const EdgeField&)>& fn,
                              const EdgeField& a, int dir, std::size_t site, double h) {
  const double w = a.at(dir, site);
  if (!(w - h / 2 > a.delta() && w + h / 2 <= 1.0)) {
    throw EnsembleError("vertical_difference: perturbation leaves (delta, 1]");
  }
  SiteField plus = fn(a.with_edge(dir, site, w + h / 2));
  SiteField minus = fn(a.with_edge(dir, site, w - h / 2));
  // The actual step is (w + h/2) - (w - h/2) in floating point.
  const double step = (w + h / 2) - (w - h / 2);
  plus -= minus;
  for (double& v : plus.values()) v /= step;
  return plus;
}

}  // namespace clab
