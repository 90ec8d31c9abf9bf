#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "clab/ensemble.hpp"
#include "clab/kernels.hpp"
#include "clab/solver.hpp"

using namespace clab;

namespace {

struct Setup {
  Torus t;
  std::vector<double> coef, in, out;
  explicit Setup(int d, int L) : t(d, L), coef(t.edges()), in(t.sites()), out(t.sites()) {
    std::mt19937_64 g(1);
    std::uniform_real_distribution<double> u(0.25, 1.0);
    for (double& x : coef) x = u(g);
    for (double& x : in) x = u(g) - 0.6;
  }
  kernels::EllipticStencil op() const { return {1e-3, 1.0, coef, 1.0}; }
};

template <bool Parallel>
void BM_apply_elliptic(benchmark::State& st) {
  Setup s(3, static_cast<int>(st.range(0)));
  const auto op = s.op();
  for (auto _ : st) {
    if constexpr (Parallel) {
      kernels::parallel::apply_elliptic(s.t, op, s.in, s.out);
    } else {
      kernels::reference::apply_elliptic(s.t, op, s.in, s.out);
    }
    benchmark::DoNotOptimize(s.out.data());
  }
  st.SetItemsProcessed(st.iterations() * s.t.sites());
}

template <bool Parallel>
void BM_forward_diff(benchmark::State& st) {
  Setup s(3, static_cast<int>(st.range(0)));
  for (auto _ : st) {
    for (int i = 0; i < 3; ++i) {
      if constexpr (Parallel) {
        kernels::parallel::forward_diff(s.t, i, s.in, s.out);
      } else {
        kernels::reference::forward_diff(s.t, i, s.in, s.out);
      }
    }
    benchmark::DoNotOptimize(s.out.data());
  }
  st.SetItemsProcessed(st.iterations() * 3 * s.t.sites());
}

template <bool Parallel>
void BM_dot(benchmark::State& st) {
  Setup s(3, static_cast<int>(st.range(0)));
  for (auto _ : st) {
    const double r = Parallel ? kernels::parallel::dot(s.in, s.in) : kernels::reference::dot(s.in, s.in);
    benchmark::DoNotOptimize(r);
  }
  st.SetItemsProcessed(st.iterations() * s.t.sites());
}

void BM_cg_solve(benchmark::State& st) {
  const Torus t(3, static_cast<int>(st.range(0)));
  Ensemble e{ConductanceLaw::uniform(0.25, 1.0, 0.2), {}};
  const EdgeField a = sample_field(t, e, 0);
  SiteField rhs(t);
  rhs[0] = 1.0;
  rhs[t.sites() / 2] = -1.0;
  const auto op = OperatorSpec::hetero(a, 1e-2);
  for (auto _ : st) {
    const Solution s = solve_cg(op, rhs, {1e-10, 40000, true, st.range(1) == 1});
    benchmark::DoNotOptimize(s.u[0]);
    st.counters["iterations"] = s.report.iterations;
  }
}

}  // namespace

BENCHMARK(BM_apply_elliptic<false>)->Name("apply_elliptic/reference")->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_apply_elliptic<true>)->Name("apply_elliptic/parallel")->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_forward_diff<false>)->Name("forward_diff/reference")->Arg(32)->Arg(64);
BENCHMARK(BM_forward_diff<true>)->Name("forward_diff/parallel")->Arg(32)->Arg(64);
BENCHMARK(BM_dot<false>)->Name("dot/reference")->Arg(32)->Arg(64);
BENCHMARK(BM_dot<true>)->Name("dot/parallel")->Arg(32)->Arg(64);
// second argument: 1 = deterministic single-thread mode, 0 = threaded
BENCHMARK(BM_cg_solve)->Args({32, 1})->Args({32, 0})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
