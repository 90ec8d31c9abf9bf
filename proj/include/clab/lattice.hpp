#pragma once

// Periodic lattice geometry and exact discrete vector calculus on the torus
// (Z/LZ)^d. Sites are indexed row-major with x_1 fastest; directions are
// 0-based internally (direction i is the unit vector e_{i+1}).

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace clab {

inline constexpr int kMaxDim = 5;

using Coord = std::array<int, kMaxDim>;

class LatticeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Torus {
 public:
  /// `side` is the physical side length S; the mesh is S/L. Zero means S = L.
  Torus(int d, int L, double side = 0.0);

  int dim() const { return d_; }
  int side_sites() const { return L_; }
  double side() const { return side_; }
  double mesh() const { return side_ / L_; }
  std::size_t sites() const { return n_; }
  std::size_t edges() const { return n_ * static_cast<std::size_t>(d_); }
  std::size_t stride(int dir) const { return stride_[dir]; }

  Coord coords(std::size_t idx) const;
  /// Coordinates are reduced mod L, so any integer vector is accepted.
  std::size_t index(const Coord& c) const;
  std::size_t neighbor(std::size_t idx, int dir, int step) const;
  std::size_t shifted(std::size_t idx, const Coord& offset) const;
  /// Euclidean length of the shortest periodic image of x - y.
  double distance(std::size_t x, std::size_t y) const;

  bool operator==(const Torus& o) const {
    return d_ == o.d_ && L_ == o.L_ && side_ == o.side_;
  }
  bool same_sites(const Torus& o) const { return d_ == o.d_ && L_ == o.L_; }

 private:
  int d_;
  int L_;
  double side_;
  std::size_t n_;
  std::array<std::size_t, kMaxDim> stride_{};
};

class SiteField {
 public:
  explicit SiteField(const Torus& t, double fill = 0.0);
  SiteField(const Torus& t, std::vector<double> values);

  const Torus& torus() const { return torus_; }
  std::size_t size() const { return v_.size(); }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }
  std::span<double> values() { return v_; }
  std::span<const double> values() const { return v_; }

  double mean() const;
  double sum() const;
  double max_abs() const;

  SiteField& operator+=(const SiteField& o);
  SiteField& operator-=(const SiteField& o);
  SiteField& operator*=(double s);
  /// this += s * o
  SiteField& add_scaled(double s, const SiteField& o);
  SiteField& add_constant(double c);

 private:
  Torus torus_;
  std::vector<double> v_;
};

SiteField operator+(SiteField a, const SiteField& b);
SiteField operator-(SiteField a, const SiteField& b);
SiteField operator*(double s, SiteField a);
/// Pointwise product.
SiteField hadamard(const SiteField& a, const SiteField& b);
/// Compensated sum of a(x) * b(x) over the torus.
double inner(const SiteField& a, const SiteField& b);
double max_abs_diff(const SiteField& a, const SiteField& b);

/// Values per (direction, site), stored direction-major.
class VectorField {
 public:
  explicit VectorField(const Torus& t, double fill = 0.0);

  const Torus& torus() const { return torus_; }
  std::size_t size() const { return v_.size(); }
  std::span<double> component(int dir);
  std::span<const double> component(int dir) const;
  double& at(int dir, std::size_t site) { return v_[dir * torus_.sites() + site]; }
  double at(int dir, std::size_t site) const { return v_[dir * torus_.sites() + site]; }
  std::span<double> values() { return v_; }
  std::span<const double> values() const { return v_; }

  SiteField component_field(int dir) const;
  void set_component(int dir, const SiteField& f);
  VectorField& operator+=(const VectorField& o);

 private:
  Torus torus_;
  std::vector<double> v_;
};

double inner(const VectorField& a, const VectorField& b);
double max_abs_diff(const VectorField& a, const VectorField& b);

/// Conductances omega on the edges (x, x+e_i), stored like a VectorField.
/// Every value lies in (delta, 1].
class EdgeField {
 public:
  EdgeField(const Torus& t, double delta, std::vector<double> values);
  static EdgeField constant(const Torus& t, double value, double delta = 0.0);

  const Torus& torus() const { return torus_; }
  double delta() const { return delta_; }
  std::span<const double> component(int dir) const;
  double at(int dir, std::size_t site) const { return v_[dir * torus_.sites() + site]; }
  std::span<const double> values() const { return v_; }
  SiteField component_field(int dir) const;
  /// Copy with a single edge replaced.
  EdgeField with_edge(int dir, std::size_t site, double value) const;
  /// True when every edge carries the same value.
  bool is_constant() const;

 private:
  Torus torus_;
  double delta_;
  std::vector<double> v_;
};

// Discrete calculus. grad_i f(x) = f(x+e_i) - f(x); div*_i F(x) = F(x-e_i) - F(x).
VectorField grad(const SiteField& f);
SiteField div_star(const VectorField& F);
SiteField grad_dir(const SiteField& f, int dir);
SiteField div_star_dir(const SiteField& Fi, int dir);

// Mesh-scaled variants: the plain operators divided by eps.
VectorField grad_eps(const SiteField& f, double eps);
SiteField div_star_eps(const VectorField& F, double eps);
SiteField grad_eps_dir(const SiteField& f, int dir, double eps);
SiteField div_star_eps_dir(const SiteField& Fi, int dir, double eps);

/// g(x) = f(x + offset) with offset in lattice units.
SiteField shift(const SiteField& f, const Coord& offset);

/// Unit offset helpers: +e_i, -e_i, and sums of unit vectors.
Coord unit(int dir, int step = 1);
Coord operator+(Coord a, const Coord& b);

/// The two terms of the discrete Leibniz rule that keeps the microscopic
/// argument fixed:
///   grad_{eps,i}(f g) = grad_{eps,i} f * g + f(x + eps e_i) * grad_i g / eps.
/// Both fields live on the same site set (x = eps * y).
std::pair<VectorField, VectorField> leibniz_expand(const SiteField& f_macro,
                                                   const SiteField& g_micro, double eps);

}  // namespace clab
