#pragma once

// Inversion of mass + div*_eps (a grad_eps) on the torus: matrix-free
// preconditioned CG, Green's-function columns, a dense LU oracle for small
// tori, and the Fourier solver for constant coefficients.

#include <functional>
#include <stdexcept>
#include <string>

#include "clab/lattice.hpp"

namespace clab {

/// mass + (1/eps^2) div*(a grad). `coef` is non-owning; when null the
/// coefficient is the scalar `abar`.
struct OperatorSpec {
  const EdgeField* coef = nullptr;
  double abar = 1.0;
  double mass = 0.0;
  double eps = 1.0;

  static OperatorSpec hetero(const EdgeField& a, double mass, double eps = 1.0) {
    return {&a, 1.0, mass, eps};
  }
  static OperatorSpec hetero(EdgeField&&, double, double = 1.0) = delete;
  static OperatorSpec constant(double abar, double mass, double eps = 1.0) {
    return {nullptr, abar, mass, eps};
  }
};

struct SolverSettings {
  double tol = 1e-10;
  int max_iter = 20000;
  bool jacobi = true;
  /// Single-threaded kernels, so results are bitwise reproducible.
  bool deterministic = true;
};

struct SolveReport {
  int iterations = 0;
  double rel_residual = 0.0;
  double seconds = 0.0;
  bool converged = false;
  int restarts = 0;
};

class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, SolveReport r) : std::runtime_error(what), report(r) {}
  SolveReport report;
};

struct Solution {
  SiteField u;
  SolveReport report;
};

SiteField apply(const OperatorSpec& op, const SiteField& f);
SiteField diagonal(const OperatorSpec& op, const Torus& t);

/// Throws SolveError when the relative residual does not reach `tol`. For
/// mass 0 the right-hand side must have zero mean and the solution is
/// returned with zero mean.
Solution solve_cg(const OperatorSpec& op, const SiteField& rhs, const SolverSettings& s = {});

/// Column G(., z) with source delta_z. Requires mass > 0.
SiteField green_column(const OperatorSpec& op, const Torus& t, std::size_t z,
                       const SolverSettings& s = {});
/// Solution with the dipole source delta_{x} - delta_{x + e_dir}; allowed at mass 0.
SiteField green_dipole(const OperatorSpec& op, const Torus& t, int dir, std::size_t x,
                       const SolverSettings& s = {});

/// Dense assembly from the edge list and LU factorization. n_sites <= 4096.
SiteField dense_solve(const OperatorSpec& op, const SiteField& rhs);

/// Multiplies the discrete Fourier transform of `rhs` by m(k), where k holds
/// the signed integer frequencies in (-L/2, L/2]. The zero mode is set to 0
/// when m returns a non-finite value there.
SiteField fourier_multiplier(const SiteField& rhs, const std::function<double(const Coord&)>& m);

/// Exact solve of (alpha + abar div*_eps grad_eps) u = rhs by diagonalization.
/// alpha = 0 needs a mean-zero rhs; the zero mode of u is then 0.
SiteField solve_constant_fft(double abar, double alpha, double eps, const SiteField& rhs);

struct DecayFit {
  double rate = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  bool accepted = false;
  std::string note;
};

/// Fits log|u| against the periodic distance from `center` on the annulus
/// r_min <= r <= r_max, after averaging over unit-width shells. Throws if the
/// annulus reaches the wrap seam (r_max >= L/2).
DecayFit decay_check(const SiteField& u, std::size_t center, double r_min, double r_max);

}  // namespace clab
