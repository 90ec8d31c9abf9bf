#pragma once

// Stencil and reduction kernels on raw site arrays. Two implementations with
// identical contracts:
//   reference::  per-site coordinate arithmetic, obviously correct, serial;
//   parallel::   row-blocked loops with OpenMP over rows.
// Elementwise kernels agree bitwise. Reductions use a fixed block partition
// and compensated summation, so parallel results do not depend on the
// number of threads.

#include <cstddef>
#include <span>

#include "clab/lattice.hpp"

namespace clab::kernels {

/// Coefficients of mass + scale * div* (a grad). `coef` holds d components
/// of n values each, or is empty for the constant coefficient `const_coef`.
struct EllipticStencil {
  double mass = 0.0;
  double scale = 1.0;
  std::span<const double> coef{};
  double const_coef = 1.0;
};

namespace reference {
void forward_diff(const Torus& t, int dir, std::span<const double> in, std::span<double> out);
void backward_adj(const Torus& t, int dir, std::span<const double> in, std::span<double> out);
void apply_elliptic(const Torus& t, const EllipticStencil& op, std::span<const double> in,
                    std::span<double> out);
void diagonal(const Torus& t, const EllipticStencil& op, std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
double sum(std::span<const double> a);
}  // namespace reference

namespace parallel {
void forward_diff(const Torus& t, int dir, std::span<const double> in, std::span<double> out);
void backward_adj(const Torus& t, int dir, std::span<const double> in, std::span<double> out);
void apply_elliptic(const Torus& t, const EllipticStencil& op, std::span<const double> in,
                    std::span<double> out);
void diagonal(const Torus& t, const EllipticStencil& op, std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
double sum(std::span<const double> a);
/// y = a*x + b*y
void axpby(double a, std::span<const double> x, double b, std::span<double> y);
/// z = x / w (Jacobi application)
void divide(std::span<const double> x, std::span<const double> w, std::span<double> z);
void add_constant(std::span<double> x, double c);
}  // namespace parallel

/// Sets the OpenMP thread count used by parallel:: (1 for deterministic runs).
void set_threads(int n);
int threads();

}  // namespace clab::kernels
