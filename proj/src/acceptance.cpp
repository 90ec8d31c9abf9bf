#include "clab/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>

#include "clab/correctors.hpp"
#include "clab/solver.hpp"
#include "clab/statistics.hpp"
#include "clab/twoscale.hpp"

namespace clab::acceptance {

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

Check at_most(std::string claim, double measured, double tol, std::string evidence = "") {
  return {std::move(claim), measured, "<= " + fmt(tol), measured <= tol, false, std::move(evidence)};
}

Check within(std::string claim, double measured, double target, double half, std::string evidence = "") {
  return {std::move(claim), measured, fmt(target) + " +/- " + fmt(half),
          std::abs(measured - target) <= half, false, std::move(evidence)};
}

SiteField random_site(const Torus& t, std::uint64_t seed, bool centered) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SiteField f(t);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = u(g);
  if (centered) f.add_constant(-f.mean());
  return f;
}

VectorField random_vector(const Torus& t, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorField F(t);
  for (double& x : F.values()) x = u(g);
  return F;
}

Ensemble uniform_ensemble(std::uint64_t seed) {
  Ensemble e{ConductanceLaw::uniform(0.25, 1.0, 0.2), {}};
  e.seeds.master = seed;
  return e;
}

const SolverSettings kTight{1e-13, 40000, true, true};

// ---------------------------------------------------------------------------

void exact_identities(CriterionResult& r) {
  {
    double worst = 0.0;
    for (int d = 1; d <= 4; ++d) {
      const Torus t(d, d == 1 ? 17 : (d == 4 ? 5 : 9));
      const SiteField f = random_site(t, 11 + d, false);
      const VectorField F = random_vector(t, 23 + d);
      const double lhs = inner(grad(f), F);
      worst = std::max(worst, std::abs(lhs - inner(f, div_star(F))) / (1.0 + std::abs(lhs)));
    }
    r.checks.push_back(at_most("summation by parts <grad f,F> = <f,div* F>, d=1..4", worst, 1e-12));
  }
  {
    const Torus t(3, 8, 2.0);
    const double eps = t.mesh();
    const SiteField f = random_site(t, 7, false);
    const SiteField g = random_site(t, 8, false);
    auto [first, second] = leibniz_expand(f, g, eps);
    const VectorField lhs = grad_eps(hadamard(f, g), eps);
    first += second;
    double scale = 0.0;
    for (double v : lhs.values()) scale = std::max(scale, std::abs(v));
    r.checks.push_back(at_most("discrete Leibniz rule, relative max deviation", max_abs_diff(lhs, first) / scale,
                               1e-13, "d=3, L=8, eps=1/4, random f and g"));
  }
  MacroProblem p = MacroProblem::standard(0.58);
  const double eps = 0.25;
  const Torus micro(2, p.sites_per_side(eps));
  const EdgeField a = sample_field(micro, uniform_ensemble(11), 0);
  const ExpansionBundle b = build_bundle(a, p, eps);
  const SourceTermLedger led = build_ledger(a, b, p.alpha);
  r.checks.push_back(at_most("J1 + J2 + K4 = 0 (max norm)", led.cancellation_residual(), 1e-10,
                             "d=2, L=32, eps=1/4, seeded uniform law"));
  const RemainderCheck rc = remainder_identity_check(a, b, led, p.alpha);
  r.checks.push_back(at_most("remainder identity, relative residual", rc.relative_residual, 1e-9,
                             "d=2, L=32, seeded realization"));
  {
    const Torus t(2, 16);
    SiteField F = random_site(t, 5, true);
    r.checks.push_back(at_most("flux potential |div* Psi - F|_inf", flux_potential_residual(flux_potential(F)),
                               1e-10, "d=2, L=16"));
  }
  {
    const Torus t(3, 16);
    const EdgeField w = sample_field(t, uniform_ensemble(9), 0);
    const auto op = OperatorSpec::hetero(w, 0.0);
    const SiteField rhs = random_site(t, 10, true);
    const Solution s = solve_cg(op, rhs, {1e-12, 40000, true, true});
    r.checks.push_back(at_most("CG vs dense LU, max abs difference", max_abs_diff(s.u, dense_solve(op, rhs)),
                               1e-8, "d=3, L=16 (4096 sites), lambda=0"));
  }
  {
    MacroProblem q = MacroProblem::standard(0.6, 4.0);
    q.width = 0.5;
    const EdgeField c = EdgeField::constant(Torus(2, 16), 0.6);
    const ExpansionBundle bc = build_bundle(c, q, 0.25);
    double corr = 0.0;
    for (const auto& ph : bc.phi) corr = std::max(corr, ph.field.max_abs());
    if (bc.psi2) {
      for (const auto& ps : bc.psi2->psi) corr = std::max(corr, ps.field.max_abs());
      for (const auto& ps : bc.psi2->psit) corr = std::max(corr, ps.field.max_abs());
    }
    r.checks.push_back(at_most("constant coefficients: max |corrector|", corr, 0.0, "a = abar = 0.6, d=2"));
    r.checks.push_back(at_most("constant coefficients: |u_eps - u0|_inf", max_abs_diff(*bc.u_eps, bc.u0), 1e-8));
  }
}

void closed_forms(CriterionResult& r) {
  {
    const Ensemble e = uniform_ensemble(7);
    const Torus t(1, 1024);
    double worst = 0.0;
    for (int m = 0; m < 5; ++m) {
      const EdgeField a = sample_field(t, e, m);
      double inv = 0.0;
      for (double w : a.values()) inv += 1.0 / w;
      const auto A = homogenized_matrix(a, first_correctors(a, 0.0, {1e-14, 40000, true, true}));
      worst = std::max(worst, std::abs(A[0] - t.sites() / inv));
    }
    r.checks.push_back(at_most("d=1 abar vs per-realization harmonic mean", worst, 1e-10, "L=1024, 5 realizations"));
  }
  {
    const Torus t(2, 8);
    const double lambda = 1e-2;
    const EdgeField a = sample_field(t, uniform_ensemble(8), 0);
    std::mt19937_64 g(11);
    double worst = 0.0;
    for (int pair = 0; pair < 10; ++pair) {
      const int k = static_cast<int>(g() % 2);
      const int dir = static_cast<int>(g() % 2);
      const std::size_t x = g() % t.sites();
      const std::size_t y = g() % t.sites();
      const Corrector phi = first_corrector(a, k, lambda, kTight);
      const SiteField formula = sensitivity_green(a, phi, k, dir, x, kTight);
      const SiteField fd = vertical_difference(
          [&](const EdgeField& b) { return first_corrector(b, k, lambda, kTight).field; }, a, dir, x, 1e-5);
      const double scale = std::max(std::abs(formula[y]), 1e-3 * formula.max_abs());
      worst = std::max(worst, std::abs(formula[y] - fd[y]) / scale);
    }
    r.checks.push_back(at_most("sensitivity formula vs central difference, relative", worst, 1e-4,
                               "10 random (y, e) pairs, h=1e-5, d=2, L=8, lambda=1e-2"));
  }
  {
    MacroProblem p = MacroProblem::standard(0.6, 4.0);
    const Torus g = p.grid(3, 0.25);
    const SiteField u0 = solve_homog(p, g);
    const Solution cg = solve_cg(OperatorSpec::constant(0.6, p.alpha, g.mesh()), p.source(g),
                                 {1e-14, 40000, true, true});
    r.checks.push_back(at_most("FFT vs CG, constant coefficient", max_abs_diff(u0, cg.u), 1e-10, "d=3, L=16"));
  }
}

// Spatial average of |f|^2 and of |grad f|^2 (stationary, so equal in law to the origin value).
std::pair<double, double> spatial_m2(const Corrector& k) {
  const Torus& t = k.field.torus();
  double f2 = 0.0, g2 = 0.0;
  for (std::size_t x = 0; x < t.sites(); ++x) {
    f2 += k.field[x] * k.field[x];
    for (int i = 0; i < t.dim(); ++i) g2 += k.gradient.at(i, x) * k.gradient.at(i, x);
  }
  return {f2 / t.sites(), g2 / t.sites()};
}

Corrector psi2_11(const EdgeField& a, const Corrector& phi, double lambda, const SolverSettings& s) {
  const SiteField one(a.torus(), 1.0);
  return higher_corrector(a, 2, "psi2_11",
                          {{RhsTerm::Variant::Flux, 0, &phi.field, -1.0},
                           {RhsTerm::Variant::Mass, 0, &one, -1.0}},
                          lambda, s);
}

struct LadderMoments {
  MomentEstimate lo, hi;
  double change() const { return std::abs(hi.mean - lo.mean) / lo.mean; }
};

void moment_stability(CriterionResult& r, const SuiteOptions& o) {
  const SolverSettings s{1e-10, 40000, true, true};
  const std::vector<double> lambdas{1e-3, 1e-4};
  const int M = 50;
  const Ensemble e = uniform_ensemble(301);
  std::vector<double> phi[2], gpsi[2], phi2d[2];
  {
    const Torus t(3, 32);
    for (int m = 0; m < M; ++m) {
      const EdgeField a = sample_field(t, e, m);
      for (int l = 0; l < 2; ++l) {
        const Corrector ph = first_corrector(a, 0, lambdas[l], s);
        phi[l].push_back(spatial_m2(ph).first);
        gpsi[l].push_back(spatial_m2(psi2_11(a, ph, lambdas[l], s)).second);
      }
      if (o.log && m % 10 == 9) o.log("  d=3 realization " + std::to_string(m + 1) + "/" + std::to_string(M));
    }
  }
  {
    const Torus t(2, 256);
    for (int m = 0; m < M; ++m) {
      const EdgeField a = sample_field(t, e, m);
      for (int l = 0; l < 2; ++l) phi2d[l].push_back(spatial_m2(first_corrector(a, 0, lambdas[l], s)).first);
      if (o.log && m % 10 == 9) o.log("  d=2 realization " + std::to_string(m + 1) + "/" + std::to_string(M));
    }
  }
  auto ladder = [](const std::vector<double>* v) {
    return LadderMoments{mean_estimate(v[0]), mean_estimate(v[1])};
  };
  auto ev = [](const LadderMoments& lm) {
    std::ostringstream os;
    os << "lambda=1e-3: " << fmt(lm.lo.mean) << " +/- " << fmt(lm.lo.stderr_) << ", lambda=1e-4: "
       << fmt(lm.hi.mean) << " +/- " << fmt(lm.hi.stderr_);
    return os.str();
  };
  const LadderMoments a = ladder(phi), b = ladder(gpsi), c = ladder(phi2d);
  r.checks.push_back({"d=3 <|phi_1|^2> relative change, lambda 1e-3 -> 1e-4", a.change(), "< 0.1",
                      a.change() < 0.1, false, ev(a) + "; L=32, M=50"});
  r.checks.push_back({"d=3 <|grad psi2_11|^2> relative change, lambda 1e-3 -> 1e-4", b.change(), "< 0.1",
                      b.change() < 0.1, false, ev(b) + "; L=32, M=50"});
  const double growth = (c.hi.mean - c.lo.mean) / c.lo.mean;
  r.checks.push_back({"contrast: d=2 <|phi_1|^2> growth, lambda 1e-3 -> 1e-4", growth, "> 0.25 (evidence)",
                      growth > 0.25, true, ev(c) + "; L=256, M=50"});
}

void green_decay(CriterionResult& r) {
  const Torus t(3, 32);
  const GreenDecayReport g =
      green_decay_scan(t, uniform_ensemble(401), 1e-4, 2, {2, 3, 4, 5, 6, 7, 8}, 100, {1e-10, 40000, true, true});
  auto ev = [](const RateFit& f) {
    return "half-width " + fmt(f.half_width) + ", r2 " + fmt(f.r2) + "; d=3, L=32, lambda=1e-4, M=100, |y| in [2,8]";
  };
  r.checks.push_back(within("slope of |grad G| (2-norm)", g.grad_fit.slope, -2.0, 0.4, ev(g.grad_fit)));
  r.checks.push_back(within("slope of |grad grad G| (2-norm)", g.hess_fit.slope, -3.0, 0.4, ev(g.hess_fit)));
}

void twoscale_rates(CriterionResult& r, const SuiteOptions& o) {
  const Ensemble e = uniform_ensemble(501);
  const auto ec = effective_coefficient(e, 3, 16, 20, {1e-10, 40000, true, true}, std::uint64_t{1} << 32);
  MacroProblem p = MacroProblem::standard(ec.scalar, 8.0);
  p.eps_ladder = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  const std::size_t limit = available_memory_bytes();
  std::ostringstream pre;
  int fit_rungs = 0;
  for (double eps : p.eps_ladder) {
    const int L = p.sites_per_side(eps);
    const std::size_t need = estimate_cell_bytes(3, L, 1);
    const bool ok = limit == 0 || need <= limit;
    fit_rungs += ok ? 1 : 0;
    pre << "eps=" << fmt(eps) << " L=" << L << " needs " << need / (1u << 20) << " MiB"
        << (ok ? "; " : " (infeasible); ");
  }
  if (fit_rungs < 3 && !o.exhaustive) {
    const std::string ev = pre.str() + "available " + std::to_string(limit / (1u << 20)) + " MiB";
    for (const auto& [claim, tol] : std::vector<std::pair<std::string, std::string>>{
             {"slope |u_eps - u0|", "in [0.8, 1.2]"},
             {"slope |u_eps - u0 - eps u1|", ">= 1.1"},
             {"bootstrap half-width of that slope", "<= 0.15"},
             {"slope |eps^2 u2|", ">= 1.1"},
             {"sites with <u1> beyond the multiplicity-corrected 3 stderr", "== 0"}}) {
      r.checks.push_back({claim, NAN, tol, false, false, "not evaluated: " + ev});
    }
    r.note = std::to_string(fit_rungs) +
             "/4 rungs fit in memory, fewer than the 3 a slope needs; the Monte-Carlo scan was not run "
             "(--exhaustive runs it on the feasible rungs)";
    return;
  }
  ScanSettings s;
  s.M = 50;
  s.orders = {0, 1};
  s.log = o.log;
  const ExpansionScan scan = expansion_error_scan(e, 3, p, s);
  std::ostringstream feas;
  int feasible = 0;
  for (const auto& rr : scan.rungs) {
    feas << "eps=" << fmt(rr.eps) << " L=" << rr.L << (rr.feasible ? " ok" : " infeasible (" + rr.note + ")") << "; ";
    feasible += rr.feasible ? 1 : 0;
  }
  const std::string ev = feas.str();
  auto nan_check = [&](const std::string& claim, const std::string& tol) {
    r.checks.push_back({claim, NAN, tol, false, false, "fewer than 3 feasible rungs: " + ev});
  };
  if (scan.fit_e0) {
    const RateFit& f = *scan.fit_e0;
    r.checks.push_back({"slope |u_eps - u0|", f.slope, "in [0.8, 1.2]", f.slope >= 0.8 && f.slope <= 1.2, false,
                        "half-width " + fmt(f.half_width)});
  } else {
    nan_check("slope |u_eps - u0|", "in [0.8, 1.2]");
  }
  if (scan.fit_e1) {
    const RateFit& f = *scan.fit_e1;
    r.checks.push_back({"slope |u_eps - u0 - eps u1|", f.slope, ">= 1.1", f.slope >= 1.1, false, ""});
    r.checks.push_back(at_most("bootstrap half-width of that slope", f.half_width, 0.15));
  } else {
    nan_check("slope |u_eps - u0 - eps u1|", ">= 1.1");
    nan_check("bootstrap half-width of that slope", "<= 0.15");
  }
  if (scan.fit_eps2_u2) {
    r.checks.push_back({"slope |eps^2 u2|", scan.fit_eps2_u2->slope, ">= 1.1", scan.fit_eps2_u2->slope >= 1.1, false, ""});
  } else {
    nan_check("slope |eps^2 u2|", ">= 1.1");
  }
  int violations = 0;
  for (const auto& rr : scan.rungs) {
    if (rr.feasible) violations += rr.u1_mean_violations;
  }
  r.checks.push_back({"sites with <u1> beyond the multiplicity-corrected 3 stderr", static_cast<double>(violations),
                      "== 0", violations == 0 && feasible > 0, false, "over feasible rungs only"});
  r.note = std::to_string(feasible) + "/4 rungs feasible: " + ev;
}

void bias(CriterionResult& r) {
  const BiasReport rep = bias_identities(uniform_ensemble(601), 3, 16, 200, {1e-10, 40000, true, true});
  std::vector<double> zmax(3, 0.0);
  std::vector<int> fails(3, 0);
  double thr[3] = {0, 0, 0};
  for (const auto& c : rep.checks) {
    const int f = c.identity == "a_k grad_k psi2" ? 0 : c.identity == "a_k grad_k psi2t" ? 1 : 2;
    zmax[f] = std::max(zmax[f], std::abs(c.z));
    thr[f] = c.threshold;
    fails[f] += c.pass ? 0 : 1;
  }
  const char* names[3] = {"<a_k grad_k psi2_ij> identity", "<a_k grad_k psi2t_ij> identity",
                          "symmetrized cancellation over (k,i,j)"};
  for (int f = 0; f < 3; ++f) {
    r.checks.push_back({std::string(names[f]) + ": max |z|", zmax[f], "<= " + fmt(thr[f]), fails[f] == 0, false,
                        std::to_string(fails[f]) + " failing; d=3, L=16, M=200"});
  }
}

void correlation(CriterionResult& r, const SuiteOptions& o) {
  const Torus t(3, 64);
  const Ensemble e = uniform_ensemble(701);
  std::vector<SiteField> samples;
  const int M = 400;
  samples.reserve(M);
  for (int m = 0; m < M; ++m) {
    samples.push_back(first_corrector(sample_field(t, e, m), 0, 0.0, {1e-10, 40000, true, true}).field);
    if (o.log && m % 50 == 49) o.log("  realization " + std::to_string(m + 1) + "/" + std::to_string(M));
  }
  std::vector<int> lags;
  for (int l = 2; l <= 16; ++l) lags.push_back(l);
  const CorrelationReport cr = correlation_decay(samples, lags, {0, 1, 2});
  if (!cr.fit) {
    r.checks.push_back({"slope of |<phi(0) phi(x)>|", NAN, "-1 +/- 0.5", false, false, "no fit: too many lags dropped"});
    return;
  }
  int dropped = 0;
  for (const auto& l : cr.lags) dropped += l.dropped ? 1 : 0;
  r.checks.push_back(within("slope of |<phi(0) phi(x)>|", cr.fit->slope, -1.0, 0.5,
                            "half-width " + fmt(cr.fit->half_width) + ", " + std::to_string(dropped) +
                                " lags dropped; d=3, L=64, M=400, lags 2..16"));
}

void heavy(CriterionResult& r, const SuiteOptions& o) {
  const Ensemble e = uniform_ensemble(801);
  const SolverSettings s{1e-10, 40000, true, true};
  {
    const Torus t(5, 8);
    std::vector<double> v[2];
    const double lambdas[2] = {1e-1, 1e-2};
    for (int m = 0; m < 20; ++m) {
      const EdgeField a = sample_field(t, e, m);
      for (int l = 0; l < 2; ++l) {
        v[l].push_back(spatial_m2(psi2_11(a, first_corrector(a, 0, lambdas[l], s), lambdas[l], s)).first);
      }
      if (o.log) o.log("  d=5 realization " + std::to_string(m + 1) + "/20");
    }
    const auto lo = mean_estimate(v[0]), hi = mean_estimate(v[1]);
    const double ch = std::abs(hi.mean - lo.mean) / lo.mean;
    r.checks.push_back({"d=5 <|psi2_11|^2> relative change, lambda 1e-1 -> 1e-2", ch, "< 0.1", ch < 0.1, false,
                        fmt(lo.mean) + " -> " + fmt(hi.mean) + "; L=8, M=20"});
  }
  const auto ec = effective_coefficient(e, 5, 6, 8, s, std::uint64_t{1} << 32);
  MacroProblem p = MacroProblem::standard(ec.scalar, 1.0);
  p.width = 1.0 / 8;
  p.eps_ladder = {1.0 / 4, 1.0 / 6, 1.0 / 8};
  const CoefficientTable table = coefficient_prerun(e, 5, 6, 4, ec.scalar, true, s, std::uint64_t{2} << 32);
  ScanSettings ss;
  ss.M = 20;
  ss.orders = {0, 1, 2};
  ss.table = &table;
  ss.log = o.log;
  const ExpansionScan scan = expansion_error_scan(e, 5, p, ss);
  if (scan.fit_e2) {
    r.checks.push_back({"order-2 remainder slope", scan.fit_e2->slope, ">= 2.0", scan.fit_e2->slope >= 2.0, false,
                        "S=1, eps in {1/4, 1/6, 1/8}, M=20"});
    r.checks.push_back(at_most("half-width of that slope", scan.fit_e2->half_width, 0.4));
  } else {
    r.checks.push_back({"order-2 remainder slope", NAN, ">= 2.0", false, false, "no fit"});
  }
}

struct Spec {
  int id;
  const char* title;
};

const Spec kSpecs[] = {
    {1, "exact identities"},
    {2, "closed-form oracles"},
    {3, "moment boundedness across the lambda ladder"},
    {4, "Green function decay exponents"},
    {5, "two-scale convergence rates, d=3"},
    {6, "bias identities"},
    {7, "corrector correlation decay"},
    {8, "heavy d=5 stationarity and order-2 rate"},
};

}  // namespace

bool CriterionResult::pass() const {
  if (skipped || checks.empty()) return false;
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.informational || c.pass; });
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> n{"fast", "rates-d3", "heavy-d5"};
  return n;
}

std::vector<int> suite_criteria(const std::string& suite) {
  if (suite == "fast") return {1, 2};
  if (suite == "rates-d3") return {3, 4, 5, 6, 7};
  if (suite == "heavy-d5") return {8};
  throw std::invalid_argument("unknown suite '" + suite + "' (expected fast, rates-d3 or heavy-d5)");
}

CriterionResult run_criterion(int id, const SuiteOptions& o) {
  if (id < 1 || id > 8) throw std::invalid_argument("criterion must be 1..8");
  CriterionResult r;
  r.id = id;
  r.title = kSpecs[id - 1].title;
  if (id == 8 && !o.enable_heavy) {
    r.skipped = true;
    r.note = "skipped (enable with --enable-heavy)";
    return r;
  }
  if (o.log) o.log("criterion " + std::to_string(id) + ": " + r.title);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    switch (id) {
      case 1: exact_identities(r); break;
      case 2: closed_forms(r); break;
      case 3: moment_stability(r, o); break;
      case 4: green_decay(r); break;
      case 5: twoscale_rates(r, o); break;
      case 6: bias(r); break;
      case 7: correlation(r, o); break;
      case 8: heavy(r, o); break;
    }
  } catch (const std::exception& e) {
    r.checks.push_back({"criterion ran to completion", NAN, "no error", false, false, e.what()});
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<CriterionResult> run_suite(const std::string& suite, const SuiteOptions& o) {
  std::vector<CriterionResult> out;
  for (int id : suite_criteria(suite)) {
    if (o.only && *o.only != id) continue;
    out.push_back(run_criterion(id, o));
  }
  return out;
}

void print_table(std::ostream& os, const std::vector<CriterionResult>& rs, bool verbose) {
  for (const auto& r : rs) {
    const char* verdict = r.skipped ? "SKIP" : (r.pass() ? "PASS" : "FAIL");
    char head[160];
    std::snprintf(head, sizeof head, "[%s] criterion %d: %s (%.1f s)", verdict, r.id, r.title.c_str(), r.seconds);
    os << head;
    if (!r.pass() && !r.skipped) {
      for (const auto& c : r.checks) {
        if (!c.pass && !c.informational) {
          os << " | failing: " << c.claim << " = " << fmt(c.measured) << " (want " << c.tolerance << ")";
          break;
        }
      }
    }
    if (r.skipped) os << " | " << r.note;
    os << "\n";
    if (!verbose) continue;
    for (const auto& c : r.checks) {
      os << "    " << (c.informational ? "info" : (c.pass ? "pass" : "FAIL")) << "  " << c.claim
         << ": measured " << fmt(c.measured) << ", tolerance " << c.tolerance;
      if (!c.evidence.empty()) os << "  [" << c.evidence << "]";
      os << "\n";
    }
    if (!r.note.empty() && !r.skipped) os << "    note: " << r.note << "\n";
  }
}

int suite_exit_code(const std::vector<CriterionResult>& r) {
  for (const auto& c : r) {
    if (!c.skipped && !c.pass()) return 2;
  }
  return 0;
}

}  // namespace clab::acceptance
