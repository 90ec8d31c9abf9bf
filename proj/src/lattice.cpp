#include "clab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "clab/kernels.hpp"
#include "clab/summation.hpp"

namespace clab {

namespace {

void require_same(const Torus& a, const Torus& b, const char* what) {
  if (!a.same_sites(b)) {
    throw LatticeError(std::string(what) + ": fields live on different tori");
  }
}

void require_eps(double eps) {
  if (!(eps > 0.0)) throw LatticeError("mesh eps must be positive");
}

}  // namespace

Torus::Torus(int d, int L, double side) : d_(d), L_(L), side_(side == 0.0 ? L : side) {
  if (d < 1 || d > kMaxDim) throw LatticeError("torus dimension must lie in [1, 5]");
  if (L < 2) throw LatticeError("torus side must have at least 2 sites");
  if (!(side_ > 0.0)) throw LatticeError("physical side must be positive");
  std::size_t s = 1;
  for (int i = 0; i < d; ++i) {
    stride_[i] = s;
    s *= static_cast<std::size_t>(L);
  }
  n_ = s;
}

Coord Torus::coords(std::size_t idx) const {
  Coord c{};
  for (int i = 0; i < d_; ++i) {
    c[i] = static_cast<int>(idx % L_);
    idx /= L_;
  }
  return c;
}

std::size_t Torus::index(const Coord& c) const {
  std::size_t idx = 0;
  for (int i = 0; i < d_; ++i) {
    int x = c[i] % L_;
    if (x < 0) x += L_;
    idx += static_cast<std::size_t>(x) * stride_[i];
  }
  return idx;
}

std::size_t Torus::neighbor(std::size_t idx, int dir, int step) const {
  const int x = static_cast<int>((idx / stride_[dir]) % L_);
  int y = (x + step) % L_;
  if (y < 0) y += L_;
  return idx + (static_cast<std::ptrdiff_t>(y) - x) * static_cast<std::ptrdiff_t>(stride_[dir]);
}

std::size_t Torus::shifted(std::size_t idx, const Coord& offset) const {
  Coord c = coords(idx);
  for (int i = 0; i < d_; ++i) c[i] += offset[i];
  return index(c);
}

double Torus::distance(std::size_t x, std::size_t y) const {
  const Coord a = coords(x);
  const Coord b = coords(y);
  double r2 = 0.0;
  for (int i = 0; i < d_; ++i) {
    int dx = std::abs(a[i] - b[i]);
    dx = std::min(dx, L_ - dx);
    r2 += static_cast<double>(dx) * dx;
  }
  return std::sqrt(r2);
}

// ---------------------------------------------------------------------------

SiteField::SiteField(const Torus& t, double fill) : torus_(t), v_(t.sites(), fill) {}

SiteField::SiteField(const Torus& t, std::vector<double> values)
    : torus_(t), v_(std::move(values)) {
  if (v_.size() != t.sites()) throw LatticeError("site field length does not match torus");
}

double SiteField::sum() const { return kernels::parallel::sum(v_); }

double SiteField::mean() const { return sum() / static_cast<double>(v_.size()); }

double SiteField::max_abs() const {
  double m = 0.0;
  for (double x : v_) m = std::max(m, std::abs(x));
  return m;
}

SiteField& SiteField::operator+=(const SiteField& o) { return add_scaled(1.0, o); }

SiteField& SiteField::operator-=(const SiteField& o) { return add_scaled(-1.0, o); }

SiteField& SiteField::operator*=(double s) {
  for (double& x : v_) x *= s;
  return *this;
}

SiteField& SiteField::add_scaled(double s, const SiteField& o) {
  require_same(torus_, o.torus_, "add_scaled");
  kernels::parallel::axpby(s, o.v_, 1.0, v_);
  return *this;
}

SiteField& SiteField::add_constant(double c) {
  kernels::parallel::add_constant(v_, c);
  return *this;
}

SiteField operator+(SiteField a, const SiteField& b) { return a += b; }
SiteField operator-(SiteField a, const SiteField& b) { return a -= b; }
SiteField operator*(double s, SiteField a) { return a *= s; }

SiteField hadamard(const SiteField& a, const SiteField& b) {
  require_same(a.torus(), b.torus(), "hadamard");
  SiteField out(a.torus());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

double inner(const SiteField& a, const SiteField& b) {
  require_same(a.torus(), b.torus(), "inner");
  return kernels::parallel::dot(a.values(), b.values());
}

double max_abs_diff(const SiteField& a, const SiteField& b) {
  require_same(a.torus(), b.torus(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------

VectorField::VectorField(const Torus& t, double fill) : torus_(t), v_(t.edges(), fill) {}

std::span<double> VectorField::component(int dir) {
  return std::span<double>(v_).subspan(dir * torus_.sites(), torus_.sites());
}

std::span<const double> VectorField::component(int dir) const {
  return std::span<const double>(v_).subspan(dir * torus_.sites(), torus_.sites());
}

SiteField VectorField::component_field(int dir) const {
  auto c = component(dir);
  return SiteField(torus_, std::vector<double>(c.begin(), c.end()));
}

void VectorField::set_component(int dir, const SiteField& f) {
  require_same(torus_, f.torus(), "set_component");
  std::copy(f.values().begin(), f.values().end(), component(dir).begin());
}

VectorField& VectorField::operator+=(const VectorField& o) {
  require_same(torus_, o.torus_, "vector +=");
  kernels::parallel::axpby(1.0, o.v_, 1.0, v_);
  return *this;
}

double inner(const VectorField& a, const VectorField& b) {
  require_same(a.torus(), b.torus(), "inner");
  return kernels::parallel::dot(a.values(), b.values());
}

double max_abs_diff(const VectorField& a, const VectorField& b) {
  require_same(a.torus(), b.torus(), "max_abs_diff");
  double m = 0.0;
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

// ---------------------------------------------------------------------------

EdgeField::EdgeField(const Torus& t, double delta, std::vector<double> values)
    : torus_(t), delta_(delta), v_(std::move(values)) {
  if (v_.size() != t.edges()) throw LatticeError("edge field length does not match torus");
  if (!(delta >= 0.0 && delta < 1.0)) throw LatticeError("ellipticity delta must lie in [0, 1)");
  for (double w : v_) {
    if (!(w > delta && w <= 1.0)) {
      throw LatticeError("conductance " + std::to_string(w) + " outside (delta, 1]");
    }
  }
}

EdgeField EdgeField::constant(const Torus& t, double value, double delta) {
  return EdgeField(t, delta, std::vector<double>(t.edges(), value));
}

std::span<const double> EdgeField::component(int dir) const {
  return std::span<const double>(v_).subspan(dir * torus_.sites(), torus_.sites());
}

SiteField EdgeField::component_field(int dir) const {
  auto c = component(dir);
  return SiteField(torus_, std::vector<double>(c.begin(), c.end()));
}

EdgeField EdgeField::with_edge(int dir, std::size_t site, double value) const {
  std::vector<double> v = v_;
  v[dir * torus_.sites() + site] = value;
  return EdgeField(torus_, delta_, std::move(v));
}

bool EdgeField::is_constant() const {
  return std::all_of(v_.begin(), v_.end(), [&](double w) { return w == v_.front(); });
}

// ---------------------------------------------------------------------------

SiteField grad_dir(const SiteField& f, int dir) {
  SiteField out(f.torus());
  kernels::parallel::forward_diff(f.torus(), dir, f.values(), out.values());
  return out;
}

SiteField div_star_dir(const SiteField& Fi, int dir) {
  SiteField out(Fi.torus());
  kernels::parallel::backward_adj(Fi.torus(), dir, Fi.values(), out.values());
  return out;
}

VectorField grad(const SiteField& f) {
  VectorField out(f.torus());
  for (int i = 0; i < f.torus().dim(); ++i) {
    kernels::parallel::forward_diff(f.torus(), i, f.values(), out.component(i));
  }
  return out;
}

SiteField div_star(const VectorField& F) {
  const Torus& t = F.torus();
  SiteField out(t);
  SiteField tmp(t);
  for (int i = 0; i < t.dim(); ++i) {
    kernels::parallel::backward_adj(t, i, F.component(i), tmp.values());
    out += tmp;
  }
  return out;
}

VectorField grad_eps(const SiteField& f, double eps) {
  require_eps(eps);
  VectorField g = grad(f);
  for (double& x : g.values()) x /= eps;
  return g;
}

SiteField div_star_eps(const VectorField& F, double eps) {
  require_eps(eps);
  SiteField s = div_star(F);
  s *= 1.0 / eps;
  return s;
}

SiteField grad_eps_dir(const SiteField& f, int dir, double eps) {
  require_eps(eps);
  SiteField g = grad_dir(f, dir);
  g *= 1.0 / eps;
  return g;
}

SiteField div_star_eps_dir(const SiteField& Fi, int dir, double eps) {
  require_eps(eps);
  SiteField g = div_star_dir(Fi, dir);
  g *= 1.0 / eps;
  return g;
}

SiteField shift(const SiteField& f, const Coord& offset) {
  const Torus& t = f.torus();
  bool zero = true;
  for (int i = 0; i < t.dim(); ++i) zero = zero && (offset[i] % t.side_sites() == 0);
  if (zero) return f;
  SiteField out(t);
  // Row-wise copy: the x_1 offset rotates within a row, the rest moves rows.
  const int L = t.side_sites();
  int o1 = offset[0] % L;
  if (o1 < 0) o1 += L;
  const std::size_t rows = t.sites() / L;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * L;
    Coord c = t.coords(base);
    for (int i = 1; i < t.dim(); ++i) c[i] += offset[i];
    c[0] = 0;
    const std::size_t src = t.index(c);
    for (int x = 0; x < L; ++x) {
      int s = x + o1;
      if (s >= L) s -= L;
      out[base + x] = f[src + s];
    }
  }
  return out;
}

Coord unit(int dir, int step) {
  Coord c{};
  c[dir] = step;
  return c;
}

Coord operator+(Coord a, const Coord& b) {
  for (int i = 0; i < kMaxDim; ++i) a[i] += b[i];
  return a;
}

std::pair<VectorField, VectorField> leibniz_expand(const SiteField& f_macro,
                                                   const SiteField& g_micro, double eps) {
  require_eps(eps);
  require_same(f_macro.torus(), g_micro.torus(), "leibniz_expand");
  const Torus& t = f_macro.torus();
  VectorField first(t);
  VectorField second(t);
  for (int i = 0; i < t.dim(); ++i) {
    const SiteField df = grad_eps_dir(f_macro, i, eps);
    const SiteField dg = grad_dir(g_micro, i);
    const SiteField f_shift = shift(f_macro, unit(i));
    auto a = first.component(i);
    auto b = second.component(i);
    for (std::size_t x = 0; x < t.sites(); ++x) {
      a[x] = df[x] * g_micro[x];
      b[x] = f_shift[x] * dg[x] / eps;
    }
  }
  return {std::move(first), std::move(second)};
}

}  // namespace clab
