#include "clab/solver.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <vector>

#include "clab/kernels.hpp"

namespace clab {

namespace {

class ThreadScope {
 public:
  explicit ThreadScope(bool single) : prev_(kernels::threads()), active_(single) {
    if (active_) kernels::set_threads(1);
  }
  ~ThreadScope() {
    if (active_) kernels::set_threads(prev_);
  }
  ThreadScope(const ThreadScope&) = delete;
  ThreadScope& operator=(const ThreadScope&) = delete;

 private:
  int prev_;
  bool active_;
};

kernels::EllipticStencil stencil(const OperatorSpec& op) {
  kernels::EllipticStencil s;
  s.mass = op.mass;
  s.scale = 1.0 / (op.eps * op.eps);
  if (op.coef != nullptr) {
    s.coef = op.coef->values();
  } else {
    s.const_coef = op.abar;
  }
  return s;
}

void check_torus(const OperatorSpec& op, const Torus& t) {
  if (op.coef != nullptr && !op.coef->torus().same_sites(t)) {
    throw LatticeError("operator coefficient and field live on different tori");
  }
  if (!(op.eps > 0.0)) throw LatticeError("operator mesh must be positive");
  if (op.mass < 0.0) throw std::invalid_argument("operator mass must be nonnegative");
}

double norm2(std::span<const double> v) { return std::sqrt(kernels::parallel::dot(v, v)); }

void project_mean(std::span<double> v) {
  const double m = kernels::parallel::sum(v) / static_cast<double>(v.size());
  kernels::parallel::add_constant(v, -m);
}

}  // namespace

SiteField apply(const OperatorSpec& op, const SiteField& f) {
  check_torus(op, f.torus());
  SiteField out(f.torus());
  kernels::parallel::apply_elliptic(f.torus(), stencil(op), f.values(), out.values());
  return out;
}

SiteField diagonal(const OperatorSpec& op, const Torus& t) {
  check_torus(op, t);
  SiteField out(t);
  kernels::parallel::diagonal(t, stencil(op), out.values());
  return out;
}

Solution solve_cg(const OperatorSpec& op, const SiteField& rhs, const SolverSettings& s) {
  const auto t0 = std::chrono::steady_clock::now();
  const Torus& t = rhs.torus();
  check_torus(op, t);
  ThreadScope scope(s.deterministic);
  const bool singular = op.mass == 0.0;
  const auto st = stencil(op);

  SiteField b = rhs;
  if (singular) {
    const double m = b.mean();
    if (std::abs(m) > 1e-12 * std::max(b.max_abs(), std::numeric_limits<double>::min())) {
      throw std::invalid_argument("zero-mass solve needs a mean-zero right-hand side (mean " +
                                  std::to_string(m) + ")");
    }
    project_mean(b.values());
  }

  SolveReport rep;
  SiteField x(t);
  const double bnorm = norm2(b.values());
  auto finish = [&](bool ok) {
    rep.converged = ok;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  if (bnorm == 0.0) {
    finish(true);
    return {std::move(x), rep};
  }

  SiteField dinv = diagonal(op, t);
  SiteField r(t), z(t), p(t), q(t);
  auto precondition = [&] {
    if (s.jacobi) {
      kernels::parallel::divide(r.values(), dinv.values(), z.values());
    } else {
      std::copy(r.values().begin(), r.values().end(), z.values().begin());
    }
    if (singular) project_mean(z.values());
  };
  auto true_residual = [&] {
    kernels::parallel::apply_elliptic(t, st, x.values(), r.values());
    kernels::parallel::axpby(1.0, b.values(), -1.0, r.values());
    if (singular) project_mean(r.values());
    return norm2(r.values()) / bnorm;
  };

  std::copy(b.values().begin(), b.values().end(), r.values().begin());
  constexpr int kMaxRestarts = 5;
  while (true) {
    precondition();
    std::copy(z.values().begin(), z.values().end(), p.values().begin());
    double rz = kernels::parallel::dot(r.values(), z.values());
    bool hit = false;
    while (rep.iterations < s.max_iter) {
      kernels::parallel::apply_elliptic(t, st, p.values(), q.values());
      const double pq = kernels::parallel::dot(p.values(), q.values());
      if (!(pq > 0.0)) break;
      const double alpha = rz / pq;
      kernels::parallel::axpby(alpha, p.values(), 1.0, x.values());
      kernels::parallel::axpby(-alpha, q.values(), 1.0, r.values());
      ++rep.iterations;
      if (norm2(r.values()) <= s.tol * bnorm) {
        hit = true;
        break;
      }
      precondition();
      const double rz_new = kernels::parallel::dot(r.values(), z.values());
      kernels::parallel::axpby(1.0, z.values(), rz_new / rz, p.values());
      rz = rz_new;
    }
    if (singular) project_mean(x.values());
    rep.rel_residual = true_residual();
    if (rep.rel_residual <= s.tol) {
      finish(true);
      return {std::move(x), rep};
    }
    if (!hit || rep.iterations >= s.max_iter || rep.restarts >= kMaxRestarts) break;
    ++rep.restarts;
  }
  finish(false);
  throw SolveError("CG did not converge: relative residual " + std::to_string(rep.rel_residual) +
                       " after " + std::to_string(rep.iterations) + " iterations",
                   rep);
}

SiteField green_column(const OperatorSpec& op, const Torus& t, std::size_t z,
                       const SolverSettings& s) {
  if (!(op.mass > 0.0)) throw std::invalid_argument("green_column needs a positive mass");
  SiteField src(t);
  src[z] = 1.0;
  return solve_cg(op, src, s).u;
}

SiteField green_dipole(const OperatorSpec& op, const Torus& t, int dir, std::size_t x,
                       const SolverSettings& s) {
  SiteField src(t);
  src[x] += 1.0;
  src[t.neighbor(x, dir, 1)] -= 1.0;
  return solve_cg(op, src, s).u;
}

SiteField dense_solve(const OperatorSpec& op, const SiteField& rhs) {
  const Torus& t = rhs.torus();
  check_torus(op, t);
  const std::size_t n = t.sites();
  if (n > 4096) throw std::invalid_argument("dense oracle limited to 4096 sites");
  const double scale = 1.0 / (op.eps * op.eps);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t x = 0; x < n; ++x) {
    A(x, x) += op.mass;
    for (int i = 0; i < t.dim(); ++i) {
      const std::size_t y = t.neighbor(x, i, 1);
      const double w = scale * (op.coef ? op.coef->at(i, x) : op.abar);
      A(x, x) += w;
      A(y, y) += w;
      A(x, y) -= w;
      A(y, x) -= w;
    }
  }
  Eigen::VectorXd b(n);
  for (std::size_t x = 0; x < n; ++x) b(x) = rhs[x];
  if (op.mass == 0.0) {
    // A + 11^T/n; for mean-zero b its solution is the mean-zero solution of A u = b.
    A.array() += 1.0 / static_cast<double>(n);
    b.array() -= b.mean();
  }
  Eigen::VectorXd u = A.partialPivLu().solve(b);
  SiteField out(t);
  for (std::size_t x = 0; x < n; ++x) out[x] = u(x);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

SiteField fourier_multiplier(const SiteField& rhs, const std::function<double(const Coord&)>& m) {
  const Torus& t = rhs.torus();
  const int d = t.dim();
  const int L = t.side_sites();
  const std::size_t n = t.sites();
  const std::size_t half = L / 2 + 1;
  const std::size_t nc = n / L * half;

  double* real = fftw_alloc_real(n);
  fftw_complex* spec = fftw_alloc_complex(nc);
  std::vector<int> dims(d, L);
  fftw_plan fwd, bwd;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c(d, dims.data(), real, spec, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r(d, dims.data(), spec, real, FFTW_ESTIMATE);
  }
  std::copy(rhs.values().begin(), rhs.values().end(), real);
  fftw_execute(fwd);

  // FFTW's last (fastest) dimension is our direction 0 and is halved.
  for (std::size_t c = 0; c < nc; ++c) {
    Coord k{};
    std::size_t rest = c;
    k[0] = static_cast<int>(rest % half);
    rest /= half;
    for (int i = 1; i < d; ++i) {
      int ki = static_cast<int>(rest % L);
      rest /= L;
      k[i] = ki > L / 2 ? ki - L : ki;
    }
    double f = m(k);
    if (!std::isfinite(f)) {
      bool zero = true;
      for (int i = 0; i < d; ++i) zero = zero && k[i] == 0;
      if (!zero) {
        fftw_free(real);
        fftw_free(spec);
        throw std::invalid_argument("Fourier multiplier is singular away from the zero mode");
      }
      f = 0.0;
    }
    spec[c][0] *= f / static_cast<double>(n);
    spec[c][1] *= f / static_cast<double>(n);
  }
  fftw_execute(bwd);
  SiteField out(t, std::vector<double>(real, real + n));
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }
  fftw_free(real);
  fftw_free(spec);
  return out;
}

SiteField solve_constant_fft(double abar, double alpha, double eps, const SiteField& rhs) {
  if (alpha < 0.0) throw std::invalid_argument("solve_constant_fft needs alpha >= 0");
  if (!(abar > 0.0) || !(eps > 0.0)) {
    throw std::invalid_argument("solve_constant_fft needs positive coefficient and mesh");
  }
  if (alpha == 0.0) {
    const double m = rhs.mean();
    if (std::abs(m) > 1e-12 * std::max(rhs.max_abs(), std::numeric_limits<double>::min())) {
      throw std::invalid_argument("alpha = 0 needs a mean-zero right-hand side");
    }
  }
  const int L = rhs.torus().side_sites();
  const int d = rhs.torus().dim();
  std::vector<double> s2(L);
  for (int k = 0; k < L; ++k) {
    const double s = std::sin(M_PI * k / L);
    s2[k] = 4.0 * s * s;
  }
  const double c = abar / (eps * eps);
  return fourier_multiplier(rhs, [&](const Coord& k) {
    double sym = alpha;
    for (int i = 0; i < d; ++i) sym += c * s2[(k[i] + L) % L];
    return sym == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / sym;
  });
}

// ---------------------------------------------------------------------------

DecayFit decay_check(const SiteField& u, std::size_t center, double r_min, double r_max) {
  const Torus& t = u.torus();
  if (r_max >= t.side_sites() / 2.0) {
    throw std::invalid_argument("decay annulus reaches the wrap seam");
  }
  if (!(r_min < r_max)) throw std::invalid_argument("decay annulus is empty");
  std::map<long, std::pair<double, int>> shells;
  for (std::size_t x = 0; x < t.sites(); ++x) {
    const double r = t.distance(x, center);
    if (r < r_min || r > r_max || u[x] == 0.0) continue;
    auto& s = shells[std::lround(r)];
    s.first += std::log(std::abs(u[x]));
    s.second += 1;
  }
  DecayFit fit;
  if (shells.size() < 3) {
    fit.note = "fewer than three populated shells";
    return fit;
  }
  std::vector<double> xs, ys;
  for (const auto& [r, s] : shells) {
    xs.push_back(static_cast<double>(r));
    ys.push_back(s.first / s.second);
  }
  const double nn = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / nn;
    my += ys[i] / nn;
  }
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double slope = sxy / sxx;
  fit.rate = -slope;
  fit.intercept = my - slope * mx;
  if (syy <= 1e-24 * std::max(1.0, my * my)) {
    fit.r2 = 0.0;
    fit.note = "no variation of |u| on the annulus";
    return fit;
  }
  fit.r2 = sxy * sxy / (sxx * syy);
  fit.accepted = fit.rate > 0.0 && fit.r2 >= 0.95;
  if (!fit.accepted) fit.note = fit.rate <= 0.0 ? "no decay" : "poor exponential fit";
  return fit;
}

}  // namespace clab
