#include <cstddef>

#include "clab/kernels.hpp"
#include "clab/summation.hpp"

namespace clab::kernels::reference {

void forward_diff(const Torus& t, int dir, std::span<const double> in, std::span<double> out) {
  for (std::size_t x = 0; x < t.sites(); ++x) out[x] = in[t.neighbor(x, dir, 1)] - in[x];
}

void backward_adj(const Torus& t, int dir, std::span<const double> in, std::span<double> out) {
  for (std::size_t x = 0; x < t.sites(); ++x) out[x] = in[t.neighbor(x, dir, -1)] - in[x];
}

void apply_elliptic(const Torus& t, const EllipticStencil& op, std::span<const double> in,
                    std::span<double> out) {
  const std::size_t n = t.sites();
  const bool varying = !op.coef.empty();
  for (std::size_t x = 0; x < n; ++x) {
    double acc = 0.0;
    for (int i = 0; i < t.dim(); ++i) {
      const std::size_t xp = t.neighbor(x, i, 1);
      const std::size_t xm = t.neighbor(x, i, -1);
      const double ap = varying ? op.coef[i * n + x] : op.const_coef;
      const double am = varying ? op.coef[i * n + xm] : op.const_coef;
      acc += ap * (in[x] - in[xp]) + am * (in[x] - in[xm]);
    }
    out[x] = op.mass * in[x] + op.scale * acc;
  }
}

void diagonal(const Torus& t, const EllipticStencil& op, std::span<double> out) {
  const std::size_t n = t.sites();
  const bool varying = !op.coef.empty();
  for (std::size_t x = 0; x < n; ++x) {
    double acc = 0.0;
    for (int i = 0; i < t.dim(); ++i) {
      const std::size_t xm = t.neighbor(x, i, -1);
      acc += varying ? op.coef[i * n + x] + op.coef[i * n + xm] : 2.0 * op.const_coef;
    }
    out[x] = op.mass + op.scale * acc;
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  CompensatedSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(a[i] * b[i]);
  return s.value();
}

double sum(std::span<const double> a) {
  CompensatedSum s;
  for (double x : a) s.add(x);
  return s.value();
}

}  // namespace clab::kernels::reference
