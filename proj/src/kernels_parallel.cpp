#include <algorithm>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "clab/kernels.hpp"
#include "clab/summation.hpp"

namespace clab::kernels {

namespace {

int g_threads = 0;

int active_threads() {
#ifdef _OPENMP
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

constexpr std::size_t kBlock = 4096;

// Reduction over a fixed partition into blocks of kBlock entries. The block
// boundaries depend only on the length, never on the thread count.
template <class F>
double blocked_sum(std::size_t n, F term) {
  const std::size_t nb = (n + kBlock - 1) / kBlock;
  std::vector<CompensatedSum> part(nb);
  const std::ptrdiff_t nbs = static_cast<std::ptrdiff_t>(nb);
#pragma omp parallel for schedule(static) num_threads(active_threads()) if (nb > 4)
  for (std::ptrdiff_t b = 0; b < nbs; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    CompensatedSum s;
    for (std::size_t i = lo; i < hi; ++i) s.add(term(i));
    part[b] = s;
  }
  CompensatedSum total;
  for (const auto& p : part) total.merge(p);
  return total.value();
}

std::ptrdiff_t rows_of(const Torus& t) {
  return static_cast<std::ptrdiff_t>(t.sites() / t.side_sites());
}

// Offsets of the +e_dir and -e_dir neighbours of the row starting at `base`,
// valid for dir > 0 (the whole row shares the same x_dir).
struct RowNeighbors {
  std::size_t plus;
  std::size_t minus;
};

RowNeighbors row_neighbors(const Torus& t, std::size_t base, int dir) {
  const std::size_t L = t.side_sites();
  const std::size_t s = t.stride(dir);
  const std::size_t x = (base / s) % L;
  const std::size_t plus = x + 1 == L ? base - (L - 1) * s : base + s;
  const std::size_t minus = x == 0 ? base + (L - 1) * s : base - s;
  return {plus, minus};
}

}  // namespace

void set_threads(int n) { g_threads = n; }
int threads() { return active_threads(); }

namespace parallel {

void forward_diff(const Torus& t, int dir, std::span<const double> in, std::span<double> out) {
  const std::size_t L = t.side_sites();
  const std::ptrdiff_t rows = rows_of(t);
#pragma omp parallel for schedule(static) num_threads(active_threads())
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * L;
    const double* a = in.data() + base;
    double* o = out.data() + base;
    if (dir == 0) {
      for (std::size_t x = 0; x + 1 < L; ++x) o[x] = a[x + 1] - a[x];
      o[L - 1] = a[0] - a[L - 1];
    } else {
      const double* p = in.data() + row_neighbors(t, base, dir).plus;
      for (std::size_t x = 0; x < L; ++x) o[x] = p[x] - a[x];
    }
  }
}

void backward_adj(const Torus& t, int dir, std::span<const double> in, std::span<double> out) {
  const std::size_t L = t.side_sites();
  const std::ptrdiff_t rows = rows_of(t);
#pragma omp parallel for schedule(static) num_threads(active_threads())
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * L;
    const double* a = in.data() + base;
    double* o = out.data() + base;
    if (dir == 0) {
      o[0] = a[L - 1] - a[0];
      for (std::size_t x = 1; x < L; ++x) o[x] = a[x - 1] - a[x];
    } else {
      const double* m = in.data() + row_neighbors(t, base, dir).minus;
      for (std::size_t x = 0; x < L; ++x) o[x] = m[x] - a[x];
    }
  }
}

void apply_elliptic(const Torus& t, const EllipticStencil& op, std::span<const double> in,
                    std::span<double> out) {
  const std::size_t n = t.sites();
  const std::size_t L = t.side_sites();
  const int d = t.dim();
  const bool varying = !op.coef.empty();
  const std::ptrdiff_t rows = rows_of(t);
#pragma omp parallel for schedule(static) num_threads(active_threads())
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * L;
    double acc[1024];
    double* buf = acc;
    std::vector<double> big;
    if (L > 1024) {
      big.resize(L);
      buf = big.data();
    }
    std::fill(buf, buf + L, 0.0);
    const double* u = in.data() + base;
    for (int i = 0; i < d; ++i) {
      // Same summation order per site as the reference: i ascending, plus then minus.
      std::size_t off_p, off_m;
      if (i == 0) {
        off_p = off_m = base;
      } else {
        const RowNeighbors nb = row_neighbors(t, base, i);
        off_p = nb.plus;
        off_m = nb.minus;
      }
      const double* cp = varying ? op.coef.data() + i * n + base : nullptr;
      const double* cm = varying ? op.coef.data() + i * n + off_m : nullptr;
      const double* up = in.data() + off_p;
      const double* um = in.data() + off_m;
      for (std::size_t x = 0; x < L; ++x) {
        std::size_t xp = x, xm = x;
        if (i == 0) {
          xp = x + 1 == L ? 0 : x + 1;
          xm = x == 0 ? L - 1 : x - 1;
        }
        const double ap = varying ? cp[x] : op.const_coef;
        const double am = varying ? (i == 0 ? op.coef[base + xm] : cm[x]) : op.const_coef;
        buf[x] += ap * (u[x] - up[xp]) + am * (u[x] - um[xm]);
      }
    }
    double* o = out.data() + base;
    for (std::size_t x = 0; x < L; ++x) o[x] = op.mass * u[x] + op.scale * buf[x];
  }
}

void diagonal(const Torus& t, const EllipticStencil& op, std::span<double> out) {
  const std::size_t n = t.sites();
  const std::size_t L = t.side_sites();
  const int d = t.dim();
  const bool varying = !op.coef.empty();
  const std::ptrdiff_t rows = rows_of(t);
#pragma omp parallel for schedule(static) num_threads(active_threads())
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * L;
    double* o = out.data() + base;
    for (std::size_t x = 0; x < L; ++x) {
      double acc = 0.0;
      for (int i = 0; i < d; ++i) {
        if (!varying) {
          acc += 2.0 * op.const_coef;
          continue;
        }
        std::size_t xm;
        if (i == 0) {
          xm = base + (x == 0 ? L - 1 : x - 1);
        } else {
          xm = row_neighbors(t, base, i).minus + x;
        }
        acc += op.coef[i * n + base + x] + op.coef[i * n + xm];
      }
      o[x] = op.mass + op.scale * acc;
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  return blocked_sum(a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

double sum(std::span<const double> a) {
  return blocked_sum(a.size(), [&](std::size_t i) { return a[i]; });
}

void axpby(double a, std::span<const double> x, double b, std::span<double> y) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for schedule(static) num_threads(active_threads()) if (n > 32768)
  for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = a * x[i] + b * y[i];
}

void divide(std::span<const double> x, std::span<const double> w, std::span<double> z) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(z.size());
#pragma omp parallel for schedule(static) num_threads(active_threads()) if (n > 32768)
  for (std::ptrdiff_t i = 0; i < n; ++i) z[i] = x[i] / w[i];
}

void add_constant(std::span<double> x, double c) {
  for (double& v : x) v += c;
}

}  // namespace parallel
}  // namespace clab::kernels
