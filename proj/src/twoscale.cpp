#include "clab/twoscale.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "clab/summation.hpp"

namespace clab {

namespace {

SiteField edge_times(const EdgeField& a, int dir, const SiteField& f) {
  SiteField out(f.torus());
  auto ai = a.component(dir);
  for (std::size_t x = 0; x < out.size(); ++x) out[x] = ai[x] * f[x];
  return out;
}

// out += s * f * g
void add_product(SiteField& out, double s, const SiteField& f, const SiteField& g) {
  for (std::size_t x = 0; x < out.size(); ++x) out[x] += s * f[x] * g[x];
}

double kron(int i, int j) { return i == j ? 1.0 : 0.0; }

// Macroscopic derivatives of u0, computed once per bundle.
struct MacroDerivs {
  int d = 0;
  double eps = 1.0;
  std::vector<SiteField> du;   // grad_{eps,j} u0
  std::vector<SiteField> ddu;  // grad_{eps,i} grad_{eps,j} u0, [i d + j]

  MacroDerivs(const SiteField& u0, double eps_) : d(u0.torus().dim()), eps(eps_) {
    for (int j = 0; j < d; ++j) du.push_back(grad_eps_dir(u0, j, eps));
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) ddu.push_back(grad_eps_dir(du[j], i, eps));
    }
  }

  // grad_{eps,j} u0(x - eps e_j)
  SiteField g(int j) const { return shift(du[j], unit(j, -1)); }
  // grad*_{eps,i} grad_{eps,i} grad_{eps,j} u0(x - eps e_j)
  SiteField third(int i, int j) const {
    return shift(div_star_eps_dir(ddu[i * d + j], i, eps), unit(j, -1));
  }
};

// Pieces of scale * (1/eps^2) div*(a grad(F psi)) with F macroscopic and psi
// microscopic:
//   p1 = scale       sum_l grad*_{eps,l} grad_{eps,l} F . a_l psi
//   p2 = scale/eps   sum_l grad_{eps,l} F(x - eps e_l) . div*_l(a_l psi)
//   p3 = scale/eps   sum_l grad*_{eps,l} F(x + eps e_l) . a_l grad_l psi
//   p4 = scale/eps^2 F . div* a grad psi
struct ProductPieces {
  SiteField p1, p2, p3, p3_mean, p4;
  explicit ProductPieces(const Torus& t) : p1(t), p2(t), p3(t), p3_mean(t), p4(t) {}
};

void accumulate_product(const EdgeField& a, const SiteField& F, const SiteField& psi, double eps,
                        double scale, ProductPieces& out, bool with_p4 = true) {
  const Torus& t = F.torus();
  for (int l = 0; l < t.dim(); ++l) {
    const SiteField dF = grad_eps_dir(F, l, eps);
    const SiteField ddF = div_star_eps_dir(dF, l, eps);
    const SiteField ap = edge_times(a, l, psi);
    add_product(out.p1, scale, ddF, ap);
    add_product(out.p2, scale / eps, shift(dF, unit(l, -1)), div_star_dir(ap, l));
    const SiteField flux = edge_times(a, l, grad_dir(psi, l));
    const SiteField back = shift(div_star_eps_dir(F, l, eps), unit(l));
    add_product(out.p3, scale / eps, back, flux);
    out.p3_mean.add_scaled(scale / eps * flux.mean(), back);
  }
  if (with_p4) {
    const SiteField Lpsi = apply(OperatorSpec::hetero(a, 0.0), psi);
    add_product(out.p4, scale / (eps * eps), F, Lpsi);
  }
}

void require_grid(const EdgeField& a, const SiteField& u0) {
  if (!a.torus().same_sites(u0.torus())) {
    throw TwoScaleError("coefficient field and macroscopic grid differ");
  }
}

const SecondCorrectors& require_psi(const ExpansionBundle& b) {
  if (!b.psi2) throw TwoScaleError("second correctors missing from the bundle");
  return *b.psi2;
}

}  // namespace

// ---------------------------------------------------------------------------

MacroProblem MacroProblem::standard(double abar, double side) {
  MacroProblem p;
  p.side = side;
  p.width = side / 16.0;
  p.abar = abar;
  return p;
}

int MacroProblem::sites_per_side(double eps) const {
  if (!(eps > 0.0)) throw TwoScaleError("eps must be positive");
  const double r = side / eps;
  const long n = std::lround(r);
  if (std::abs(r - n) > 1e-9 * r || n < 2) {
    throw TwoScaleError("S/eps must be an integer >= 2");
  }
  return static_cast<int>(n);
}

Torus MacroProblem::grid(int d, double eps) const { return Torus(d, sites_per_side(eps), side); }

SiteField MacroProblem::source(const Torus& g) const {
  SiteField f(g);
  const double h = g.mesh();
  const double c = side / 2.0;
  for (std::size_t x = 0; x < g.sites(); ++x) {
    const Coord k = g.coords(x);
    double r2 = 0.0;
    for (int i = 0; i < g.dim(); ++i) {
      double dx = std::abs(k[i] * h - c);
      dx = std::min(dx, side - dx);
      r2 += dx * dx;
    }
    f[x] = amplitude * std::exp(-r2 / (2.0 * width * width));
  }
  return f;
}

double MacroProblem::tail_at_quarter() const {
  const double r = side / 4.0;
  return std::exp(-r * r / (2.0 * width * width));
}

std::vector<std::string> MacroProblem::validate() const {
  if (!(alpha > 0.0)) throw TwoScaleError("alpha must be positive");
  if (!(side > 0.0)) throw TwoScaleError("side must be positive");
  if (!(width > 0.0)) throw TwoScaleError("source width must be positive");
  if (!(abar > 0.0)) throw TwoScaleError("abar must be positive");
  if (eps_ladder.empty()) throw TwoScaleError("eps ladder is empty");
  for (double e : eps_ladder) sites_per_side(e);
  std::vector<std::string> w;
  const double tail = tail_at_quarter();
  if (tail > 1e-12) {
    std::ostringstream os;
    os << "source decays only to " << tail << " at distance S/4 (target 1e-12)";
    w.push_back(os.str());
  }
  return w;
}

// ---------------------------------------------------------------------------

std::vector<double> homogenized_matrix(const EdgeField& a, const std::vector<Corrector>& phi) {
  const int d = a.torus().dim();
  const double n = static_cast<double>(a.torus().sites());
  std::vector<double> A(d * d, 0.0);
  for (int i = 0; i < d; ++i) {
    auto ai = a.component(i);
    for (int j = 0; j < d; ++j) {
      CompensatedSum s;
      const auto& gphi = phi[j].gradient;
      for (std::size_t x = 0; x < a.torus().sites(); ++x) {
        s.add(ai[x] * (kron(i, j) + gphi.at(i, x)));
      }
      A[i * d + j] = s.value() / n;
    }
  }
  return A;
}

EffectiveCoefficient effective_coefficient(const Ensemble& ens, int d, int L, int M,
                                           const SolverSettings& s, std::uint64_t m_offset) {
  if (M < 2) throw std::invalid_argument("effective_coefficient needs M >= 2");
  const Torus t(d, L);
  EffectiveCoefficient out;
  out.d = d;
  std::vector<std::vector<double>> entries(d * d);
  for (int m = 0; m < M; ++m) {
    try {
      const EdgeField a = sample_field(t, ens, m_offset + m);
      const auto phi = first_correctors(a, 0.0, s);
      const auto A = homogenized_matrix(a, phi);
      double diag = 0.0;
      for (int k = 0; k < d * d; ++k) entries[k].push_back(A[k]);
      for (int i = 0; i < d; ++i) diag += A[i * d + i] / d;
      out.per_realization.push_back(diag);
    } catch (const SolveError& e) {
      out.failures.push_back("realization " + std::to_string(m_offset + m) + ": " + e.what());
    }
  }
  out.M = static_cast<int>(out.per_realization.size());
  if (out.M < 2) throw TwoScaleError("fewer than two realizations converged");
  for (int k = 0; k < d * d; ++k) {
    const MomentEstimate e = mean_estimate(entries[k]);
    out.matrix.push_back(e.mean);
    out.matrix_se.push_back(e.stderr_);
  }
  const MomentEstimate e = mean_estimate(out.per_realization, "abar");
  out.scalar = e.mean;
  out.scalar_se = e.stderr_;
  return out;
}

Solution solve_hetero(const EdgeField& a, const MacroProblem& p, double eps,
                      const SolverSettings& s) {
  const Torus g = p.grid(a.torus().dim(), eps);
  if (!g.same_sites(a.torus())) throw TwoScaleError("coefficient torus does not match S/eps");
  return solve_cg(OperatorSpec::hetero(a, p.alpha, eps), p.source(g), s);
}

SiteField solve_homog(const MacroProblem& p, const Torus& grid) {
  return solve_constant_fft(p.abar, p.alpha, grid.mesh(), p.source(grid));
}

SiteField continuum_homog(const MacroProblem& p, const Torus& grid) {
  const double w = 2.0 * std::numbers::pi / p.side;
  return fourier_multiplier(p.source(grid), [&](const Coord& k) {
    double k2 = 0.0;
    for (int i = 0; i < grid.dim(); ++i) k2 += (w * k[i]) * (w * k[i]);
    return 1.0 / (p.alpha + p.abar * k2);
  });
}

// ---------------------------------------------------------------------------

SiteField build_u1(const SiteField& u0, const std::vector<Corrector>& phi, double eps) {
  const Torus& t = u0.torus();
  if (static_cast<int>(phi.size()) != t.dim()) throw TwoScaleError("u1 needs d first correctors");
  SiteField u1(t);
  for (int j = 0; j < t.dim(); ++j) {
    if (!phi[j].field.torus().same_sites(t)) throw TwoScaleError("corrector grid mismatch");
    add_product(u1, 1.0, shift(grad_eps_dir(u0, j, eps), unit(j, -1)), phi[j].field);
  }
  return u1;
}

SiteField build_u1_unshifted(const SiteField& u0, const std::vector<Corrector>& phi, double eps) {
  const Torus& t = u0.torus();
  if (static_cast<int>(phi.size()) != t.dim()) throw TwoScaleError("u1 needs d first correctors");
  SiteField u1(t);
  for (int j = 0; j < t.dim(); ++j) {
    if (!phi[j].field.torus().same_sites(t)) throw TwoScaleError("corrector grid mismatch");
    add_product(u1, 1.0, grad_eps_dir(u0, j, eps), phi[j].field);
  }
  return u1;
}

std::vector<SiteField> second_order_coefficients(const SiteField& u0, double eps) {
  const MacroDerivs D(u0, eps);
  const int d = D.d;
  std::vector<SiteField> F;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      SiteField v = shift(D.ddu[i * d + j], unit(j, -1));
      v *= -1.0;
      F.push_back(std::move(v));
    }
  }
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) F.push_back(shift(D.ddu[i * d + j], unit(j, -1) + unit(i, -1)));
  }
  return F;
}

SiteField build_u2(const SiteField& u0, const SecondCorrectors& psi, double eps) {
  const Torus& t = u0.torus();
  const int d = t.dim();
  if (psi.d != d) throw TwoScaleError("u2 needs the full second-corrector set");
  const auto F = second_order_coefficients(u0, eps);
  SiteField u2(t);
  for (int v = 0; v < d * d; ++v) {
    add_product(u2, 1.0, F[v], psi.psi[v].field);
    add_product(u2, 1.0, F[d * d + v], psi.psit[v].field);
  }
  return u2;
}

// ---------------------------------------------------------------------------

std::string group_name(Group g) {
  switch (g) {
    case Group::I: return "I";
    case Group::II: return "II";
    case Group::III: return "III";
    case Group::IV: return "IV";
    case Group::Torus: return "torus";
    case Group::Cancelling: return "cancelling";
    case Group::Residual: return "residual";
  }
  return "?";
}

const LedgerTerm& SourceTermLedger::term(const std::string& name) const {
  for (const auto& t : terms) {
    if (t.name == name) return t;
  }
  throw TwoScaleError("ledger has no term " + name);
}

bool SourceTermLedger::has(const std::string& name) const {
  return std::any_of(terms.begin(), terms.end(), [&](const auto& t) { return t.name == name; });
}

SiteField SourceTermLedger::combined(const std::string& name) const {
  if (name == "J3" || name == "K3") {
    return term(name + "-<" + name + ">").field + term("<" + name + ">").field;
  }
  return term(name).field;
}

SiteField SourceTermLedger::total(const std::vector<std::string>& drop) const {
  if (terms.empty()) throw TwoScaleError("empty ledger");
  SiteField s(terms.front().field.torus());
  for (const auto& t : terms) {
    bool skip = false;
    for (const auto& d : drop) {
      skip = skip || t.name == d || t.name == d + "-<" + d + ">" || t.name == "<" + d + ">";
    }
    if (!skip) s += t.field;
  }
  return s;
}

double SourceTermLedger::cancellation_residual() const {
  return (term("J1").field + term("J2").field + term("K4").field).max_abs();
}

std::vector<std::pair<Group, double>> SourceTermLedger::group_budgets() const {
  std::vector<std::pair<Group, double>> out;
  for (Group g : {Group::I, Group::II, Group::III, Group::IV, Group::Torus}) {
    SiteField s(terms.front().field.torus());
    for (const auto& t : terms) {
      if (t.group == g) s += t.field;
    }
    out.emplace_back(g, std::sqrt(eps_energy(s, eps)));
  }
  return out;
}

ExpansionBundle build_bundle(const EdgeField& a, const MacroProblem& p, double eps,
                             const BundleOptions& o) {
  const Torus g = p.grid(a.torus().dim(), eps);
  if (!g.same_sites(a.torus())) throw TwoScaleError("coefficient torus does not match S/eps");
  ExpansionBundle b{eps, p.abar, p.source(g), solve_homog(p, g), SiteField(g), SiteField(g),
                    SiteField(g), {}, {}, {}, {}, {}, {}};
  b.phi = first_correctors(a, 0.0, o.corrector);
  b.A = homogenized_matrix(a, b.phi);
  b.u1 = build_u1(b.u0, b.phi, eps);
  b.u1_tilde = build_u1_unshifted(b.u0, b.phi, eps);
  if (o.second_order) {
    b.psi2 = second_correctors(a, b.phi, p.abar, 0.0, o.corrector);
    b.u2 = build_u2(b.u0, *b.psi2, eps);
  }
  if (o.solve_hetero) {
    Solution s = solve_cg(OperatorSpec::hetero(a, p.alpha, eps), b.f, o.macro);
    b.hetero_report = s.report;
    SiteField z = s.u - b.u0;
    z.add_scaled(-eps, b.u1);
    if (o.second_order) z.add_scaled(-eps * eps, b.u2);
    b.u_eps = std::move(s.u);
    b.z = std::move(z);
  }
  return b;
}

SourceTermLedger build_ledger(const EdgeField& a, const ExpansionBundle& b, double alpha) {
  require_grid(a, b.u0);
  const SecondCorrectors& psi = require_psi(b);
  const Torus& t = b.u0.torus();
  const int d = t.dim();
  const double eps = b.eps;
  const MacroDerivs D(b.u0, eps);
  const auto F = second_order_coefficients(b.u0, eps);

  SourceTermLedger led;
  led.eps = eps;
  led.alpha = alpha;
  auto push = [&](std::string name, Group g, SiteField f) {
    led.terms.push_back({std::move(name), g, std::move(f)});
  };

  push("eps alpha u1", Group::III, (eps * alpha) * b.u1);
  push("eps^2 alpha u2", Group::I, (eps * eps * alpha) * b.u2);

  SiteField J0(t), J1(t), J2(t), J3f(t), J3m(t);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const double Aij = b.A[i * d + j];
      J0.add_scaled(Aij - b.abar * kron(i, j), F[i * d + j]);
      SiteField q = edge_times(a, i, grad_dir(b.phi[j].field, i));
      auto ai = a.component(i);
      for (std::size_t x = 0; x < t.sites(); ++x) q[x] += ai[x] * kron(i, j) - Aij;
      add_product(J1, 1.0, F[i * d + j], q);
      const SiteField aphi = edge_times(a, i, b.phi[j].field);
      add_product(J2, 1.0, F[d * d + i * d + j], div_star_dir(aphi, i));
      const SiteField G3 = D.third(i, j);
      const double m = aphi.mean();
      SiteField fl = aphi;
      fl.add_constant(-m);
      add_product(J3f, eps, G3, fl);
      J3m.add_scaled(eps * m, G3);
    }
  }
  push("J0", Group::Torus, std::move(J0));
  push("J1", Group::Cancelling, std::move(J1));
  push("J2", Group::Cancelling, std::move(J2));
  push("J3-<J3>", Group::III, std::move(J3f));
  push("<J3>", Group::IV, std::move(J3m));

  ProductPieces K(t);
  for (int v = 0; v < d * d; ++v) {
    accumulate_product(a, F[v], psi.psi[v].field, eps, eps * eps, K);
    accumulate_product(a, F[d * d + v], psi.psit[v].field, eps, eps * eps, K);
  }
  push("K1", Group::I, std::move(K.p1));
  push("K2", Group::II, std::move(K.p2));
  push("K3-<K3>", Group::III, K.p3 - K.p3_mean);
  push("<K3>", Group::IV, std::move(K.p3_mean));
  push("K4", Group::Cancelling, std::move(K.p4));

  // Solver residuals of the first correctors and of u0.
  SiteField rphi(t);
  const SiteField one(t, 1.0);
  for (int j = 0; j < d; ++j) {
    SiteField r = apply(OperatorSpec::hetero(a, b.phi[j].lambda), b.phi[j].field);
    r += div_star_dir(edge_times(a, j, one), j);
    add_product(rphi, 1.0 / eps, D.g(j), r);
  }
  push("phi residual", Group::Residual, std::move(rphi));
  push("u0 residual", Group::Residual,
       apply(OperatorSpec::constant(b.abar, alpha, eps), b.u0) - b.f);
  return led;
}

RemainderCheck remainder_identity_check(const EdgeField& a, const ExpansionBundle& b,
                                        const SourceTermLedger& ledger, double alpha,
                                        const std::vector<std::string>& drop) {
  require_grid(a, b.u0);
  for (const char* name : {"eps alpha u1", "eps^2 alpha u2", "J0", "J1", "J2", "J3-<J3>", "<J3>",
                           "K1", "K2", "K3-<K3>", "<K3>", "K4"}) {
    if (!ledger.has(name)) throw TwoScaleError(std::string("ledger term missing: ") + name);
  }
  const double eps = b.eps;
  SiteField U = b.u0;
  U.add_scaled(eps, b.u1);
  U.add_scaled(eps * eps, b.u2);
  const OperatorSpec op = OperatorSpec::hetero(a, alpha, eps);
  SiteField res = apply(op, U) - b.f - ledger.total(drop);
  const double fmax = b.f.max_abs();
  RemainderCheck out;
  out.max_residual = res.max_abs();
  out.relative_residual = out.max_residual / fmax;
  out.dropped = drop;
  if (b.u_eps && b.z) {
    SiteField zr = apply(op, *b.z);
    zr += ledger.total({"phi residual", "u0 residual"});
    out.z_equation_residual = zr.max_abs() / fmax;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<SiteField> third_order_coefficients(const ExpansionBundle& b, double alpha) {
  const int d = b.u0.torus().dim();
  const double eps = b.eps;
  const MacroDerivs D(b.u0, eps);
  const auto F = second_order_coefficients(b.u0, eps);
  std::vector<SiteField> G;
  for (int j = 0; j < d; ++j) G.push_back(-alpha * D.g(j));
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) G.push_back(-1.0 * D.third(i, j));
  }
  for (std::size_t v = 0; v < F.size(); ++v) {
    for (int i = 0; i < d; ++i) G.push_back(-1.0 * shift(grad_eps_dir(F[v], i, eps), unit(i, -1)));
  }
  for (std::size_t v = 0; v < F.size(); ++v) {
    for (int i = 0; i < d; ++i) G.push_back(-1.0 * shift(div_star_eps_dir(F[v], i, eps), unit(i)));
  }
  return G;
}

std::vector<ThirdOrderSource> third_order_sources(const EdgeField& a, const ExpansionBundle& b,
                                                  double alpha) {
  require_grid(a, b.u0);
  const SecondCorrectors& psi = require_psi(b);
  const int d = a.torus().dim();
  auto G = third_order_coefficients(b, alpha);
  std::vector<const Corrector*> V;
  for (const auto& c : psi.psi) V.push_back(&c);
  for (const auto& c : psi.psit) V.push_back(&c);
  auto centered = [](SiteField f) {
    f.add_constant(-f.mean());
    return f;
  };
  std::vector<ThirdOrderSource> out;
  std::size_t u = 0;
  for (int j = 0; j < d; ++j) {
    out.push_back({b.phi[j].label, std::move(G[u++]), b.phi[j].field});
  }
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      out.push_back({"a" + std::to_string(i + 1) + " " + b.phi[j].label, std::move(G[u++]),
                     centered(edge_times(a, i, b.phi[j].field))});
    }
  }
  for (const Corrector* c : V) {
    for (int i = 0; i < d; ++i) {
      out.push_back({"div" + std::to_string(i + 1) + " " + c->label, std::move(G[u++]),
                     div_star_dir(edge_times(a, i, c->field), i)});
    }
  }
  for (const Corrector* c : V) {
    for (int i = 0; i < d; ++i) {
      out.push_back({"flux" + std::to_string(i + 1) + " " + c->label, std::move(G[u++]),
                     centered(edge_times(a, i, grad_dir(c->field, i)))});
    }
  }
  return out;
}

std::vector<Corrector> third_correctors(const EdgeField& a, const std::vector<ThirdOrderSource>& src,
                                        const SolverSettings& s) {
  std::vector<Corrector> out;
  out.reserve(src.size());
  for (const auto& u : src) {
    out.push_back(higher_corrector(a, 3, "psi3 " + u.label,
                                   {{RhsTerm::Variant::Field, 0, &u.U, 1.0}}, 0.0, s));
  }
  return out;
}

CoefficientTable coefficient_table(const EdgeField& a, const std::vector<Corrector>& phi,
                                   const SecondCorrectors& psi, const std::vector<Corrector>* psi3) {
  const int d = a.torus().dim();
  CoefficientTable t;
  t.d = d;
  t.M = 1;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) t.a_phi.push_back(edge_times(a, i, phi[j].field).mean());
  }
  std::vector<const Corrector*> V;
  for (const auto& c : psi.psi) V.push_back(&c);
  for (const auto& c : psi.psit) V.push_back(&c);
  for (const Corrector* c : V) {
    for (int k = 0; k < d; ++k) {
      t.a_grad_psi.push_back(edge_times(a, k, grad_dir(c->field, k)).mean());
      t.a_psi.push_back(edge_times(a, k, c->field).mean());
    }
  }
  if (psi3 != nullptr) {
    for (const auto& c : *psi3) {
      for (int k = 0; k < d; ++k) t.a_grad_psi3.push_back(edge_times(a, k, grad_dir(c.field, k)).mean());
    }
  }
  return t;
}

CoefficientTable average_tables(const std::vector<CoefficientTable>& tables) {
  if (tables.empty()) throw TwoScaleError("no coefficient tables to average");
  CoefficientTable out = tables.front();
  auto avg = [&](std::vector<double> CoefficientTable::*member) {
    std::vector<double>& dst = out.*member;
    for (std::size_t k = 0; k < dst.size(); ++k) {
      CompensatedSum s;
      for (const auto& t : tables) {
        if ((t.*member).size() != dst.size()) throw TwoScaleError("coefficient tables differ in shape");
        s.add((t.*member)[k]);
      }
      dst[k] = s.value() / static_cast<double>(tables.size());
    }
  };
  avg(&CoefficientTable::a_phi);
  avg(&CoefficientTable::a_grad_psi);
  avg(&CoefficientTable::a_psi);
  avg(&CoefficientTable::a_grad_psi3);
  out.M = 0;
  for (const auto& t : tables) out.M += t.M;
  return out;
}

CoefficientTable coefficient_prerun(const Ensemble& ens, int d, int L, int M, double abar,
                                    bool with_psi3, const SolverSettings& s,
                                    std::uint64_t m_offset) {
  const Torus t(d, L);
  std::vector<CoefficientTable> tables;
  for (int m = 0; m < M; ++m) {
    const EdgeField a = sample_field(t, ens, m_offset + m);
    const auto phi = first_correctors(a, 0.0, s);
    const auto psi = second_correctors(a, phi, abar, 0.0, s);
    if (!with_psi3) {
      tables.push_back(coefficient_table(a, phi, psi));
      continue;
    }
    // psi3 needs the U fields only; a unit grid carries them.
    ExpansionBundle b{1.0, abar, SiteField(t), SiteField(t), SiteField(t), SiteField(t),
                      SiteField(t), {}, {}, phi, psi, {}, {}};
    const auto src = third_order_sources(a, b, 1.0);
    const auto psi3 = third_correctors(a, src, s);
    tables.push_back(coefficient_table(a, phi, psi, &psi3));
  }
  return average_tables(tables);
}

SiteField bias_v1(const ExpansionBundle& b, const CoefficientTable& tab, double alpha) {
  const Torus& t = b.u0.torus();
  const int d = t.dim();
  if (tab.d != d) throw TwoScaleError("coefficient table dimension mismatch");
  const double eps = b.eps;
  const MacroDerivs D(b.u0, eps);
  const auto F = second_order_coefficients(b.u0, eps);
  SiteField src(t);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) src.add_scaled(-tab.a_phi[i * d + j], D.third(i, j));
  }
  for (std::size_t v = 0; v < F.size(); ++v) {
    for (int k = 0; k < d; ++k) {
      src.add_scaled(-tab.a_grad_psi[v * d + k], shift(div_star_eps_dir(F[v], k, eps), unit(k)));
    }
  }
  return solve_constant_fft(b.abar, alpha, eps, src);
}

SiteField bias_v2(const ExpansionBundle& b, const std::vector<SiteField>& G,
                  const CoefficientTable& tab, double alpha) {
  const Torus& t = b.u0.torus();
  const int d = t.dim();
  if (tab.d != d) throw TwoScaleError("coefficient table dimension mismatch");
  if (tab.a_grad_psi3.size() != G.size() * d) {
    throw TwoScaleError("coefficient table lacks the third-order entries");
  }
  const double eps = b.eps;
  const auto F = second_order_coefficients(b.u0, eps);
  SiteField src(t);
  for (std::size_t v = 0; v < F.size(); ++v) {
    for (int k = 0; k < d; ++k) {
      src.add_scaled(-tab.a_psi[v * d + k],
                     div_star_eps_dir(grad_eps_dir(F[v], k, eps), k, eps));
    }
  }
  for (std::size_t u = 0; u < G.size(); ++u) {
    for (int k = 0; k < d; ++k) {
      src.add_scaled(-tab.a_grad_psi3[u * d + k], shift(div_star_eps_dir(G[u], k, eps), unit(k)));
    }
  }
  return solve_constant_fft(b.abar, alpha, eps, src);
}

Order3Pieces order3_pieces(const EdgeField& a, const ExpansionBundle& b, double alpha,
                           const CoefficientTable& table, const SolverSettings& s) {
  const Torus& t = b.u0.torus();
  const double eps = b.eps;
  const auto src = third_order_sources(a, b, alpha);
  Order3Pieces out{third_correctors(a, src, s), SiteField(t), SiteField(t), SiteField(t),
                   SiteField(t), 0.0, 0.0};
  ProductPieces Lp(t);
  SiteField GU(t);
  for (std::size_t u = 0; u < src.size(); ++u) {
    add_product(out.u3, 1.0, src[u].G, out.psi3[u].field);
    accumulate_product(a, src[u].G, out.psi3[u].field, eps, eps * eps * eps, Lp);
    add_product(GU, eps, src[u].G, src[u].U);
  }
  out.l4_residual = max_abs_diff(Lp.p4, GU);

  // Order-3 identity: the order-2 ledger plus eps^3 alpha u3 and L1..L4.
  const SourceTermLedger led = build_ledger(a, b, alpha);
  SiteField U = b.u0;
  U.add_scaled(eps, b.u1);
  U.add_scaled(eps * eps, b.u2);
  U.add_scaled(eps * eps * eps, out.u3);
  SiteField res = apply(OperatorSpec::hetero(a, alpha, eps), U) - b.f - led.total();
  res.add_scaled(-eps * eps * eps * alpha, out.u3);
  res -= Lp.p1;
  res -= Lp.p2;
  res -= Lp.p3;
  res -= Lp.p4;
  out.identity_residual = res.max_abs() / b.f.max_abs();

  std::vector<SiteField> G;
  for (const auto& x : src) G.push_back(x.G);
  out.v1 = bias_v1(b, table, alpha);
  out.v11 = build_u1(out.v1, b.phi, eps);
  out.v2 = bias_v2(b, G, table, alpha);
  return out;
}

// ---------------------------------------------------------------------------

std::size_t estimate_cell_bytes(int d, int L, int max_order) {
  double n = 1.0;
  for (int i = 0; i < d; ++i) n *= L;
  // coefficients, macro fields and CG workspace
  double fields = d + 3.0 * d * d + 16.0;
  if (max_order >= 1) fields += d * (1.0 + d);
  if (max_order >= 2) fields += 2.0 * d * d * (1.0 + d) + 2.0 * d * d;
  return static_cast<std::size_t>(std::min(n * fields * 8.0, 1.8e19));
}

std::size_t available_memory_bytes() {
  std::ifstream in("/proc/meminfo");
  std::string key;
  std::size_t kb = 0;
  std::string unit_;
  while (in >> key >> kb >> unit_) {
    if (key == "MemAvailable:") return kb * 1024;
  }
  return 0;
}

RateFit fit_or_degenerate(const std::vector<double>& x, const std::vector<double>& y,
                          double floor) {
  const bool tiny = std::all_of(y.begin(), y.end(), [&](double v) { return v <= floor; });
  if (tiny) {
    RateFit f;
    f.x = x;
    f.y = y;
    f.degenerate = true;
    return f;
  }
  return rate_regression(x, y);
}

ExpansionScan expansion_error_scan(const Ensemble& ens, int d, const MacroProblem& p,
                                   const ScanSettings& s) {
  ExpansionScan out;
  out.warnings = p.validate();
  if (s.M < 2) throw TwoScaleError("expansion scan needs M >= 2");
  const int max_order = *std::max_element(s.orders.begin(), s.orders.end());
  if (max_order >= 1 && d < 3) out.warnings.push_back("order-1 rate is only claimed for d >= 3");
  if (max_order >= 2) {
    if (d < 5) out.warnings.push_back("order-2 rate is only claimed for d >= 5");
    if (s.table == nullptr || s.table->a_grad_psi3.empty()) {
      throw TwoScaleError("order 2 needs a coefficient table with third-order entries");
    }
  }
  std::vector<double> eps = p.eps_ladder;
  std::sort(eps.begin(), eps.end(), std::greater<>());
  const std::size_t limit = s.memory_limit ? s.memory_limit : available_memory_bytes();
  auto log = [&](const std::string& m) {
    if (s.log) s.log(m);
  };

  struct Acc {
    std::vector<double> e0, e1, e1t, du1, u2, e2, v1;
    std::vector<double> u1_sum, u1_sq;
    std::vector<std::vector<double>> budgets;
    int count = 0;
  };
  std::vector<Acc> acc(eps.size());
  for (std::size_t r = 0; r < eps.size(); ++r) {
    RungResult rr;
    rr.eps = eps[r];
    rr.L = p.sites_per_side(eps[r]);
    const std::size_t need = estimate_cell_bytes(d, rr.L, max_order);
    if (limit != 0 && need > limit) {
      rr.feasible = false;
      std::ostringstream os;
      os << "needs about " << need / (1u << 20) << " MiB per cell, " << limit / (1u << 20)
         << " MiB available";
      rr.note = os.str();
      out.warnings.push_back("eps = " + std::to_string(eps[r]) + ": " + rr.note);
    }
    out.rungs.push_back(rr);
  }

  BundleOptions bo;
  bo.second_order = max_order >= 1;
  bo.corrector = s.solver;
  bo.macro = s.solver;
  for (int m = 0; m < s.M; ++m) {
    std::optional<EdgeField> base;
    for (std::size_t r = 0; r < eps.size(); ++r) {
      RungResult& rr = out.rungs[r];
      if (!rr.feasible) continue;
      ScanCell cell;
      cell.m = m;
      cell.eps = eps[r];
      cell.L = rr.L;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const Torus t = p.grid(d, eps[r]);
        EdgeField a = base ? extend_field(*base, rr.L, ens, m) : sample_field(t, ens, m);
        if (!base) base = a;
        const ExpansionBundle b = build_bundle(a, p, eps[r], bo);
        cell.hetero_iterations = b.hetero_report.iterations;
        const double e = eps[r];
        Acc& A = acc[r];
        const SiteField e0 = *b.u_eps - b.u0;
        std::vector<double> row{eps_energy(e0, e)};
        if (max_order >= 1) {
          SiteField e1 = e0;
          e1.add_scaled(-e, b.u1);
          SiteField e1t = e0;
          e1t.add_scaled(-e, b.u1_tilde);
          row.push_back(eps_energy(e1, e));
          row.push_back(eps_energy(e1t, e));
          row.push_back(eps_energy(b.u1 - b.u1_tilde, e));
          row.push_back(eps_energy((e * e) * b.u2, e));
          if (t.sites() <= s.identity_check_sites) {
            const SourceTermLedger led = build_ledger(a, b, p.alpha);
            const RemainderCheck rc = remainder_identity_check(a, b, led, p.alpha);
            cell.identity_residual = rc.relative_residual;
            cell.budgets = led.group_budgets();
          }
          if (max_order >= 2) {
            const auto G = third_order_coefficients(b, p.alpha);
            const SiteField v1 = bias_v1(b, *s.table, p.alpha);
            const SiteField v11 = build_u1(v1, b.phi, e);
            const SiteField v2 = bias_v2(b, G, *s.table, p.alpha);
            SiteField e2 = e1;
            e2.add_scaled(-e * e, b.u2);
            e2.add_scaled(-e, v1);
            e2.add_scaled(-e * e, v11);
            e2.add_scaled(-e * e, v2);
            row.push_back(eps_energy(e2, e));
            row.push_back(eps_energy(v1, e));
          }
        }
        // Commit only once the whole cell has succeeded.
        A.e0.push_back(row[0]);
        cell.e0 = std::sqrt(row[0]);
        if (max_order >= 1) {
          A.e1.push_back(row[1]);
          A.e1t.push_back(row[2]);
          A.du1.push_back(row[3]);
          A.u2.push_back(row[4]);
          cell.e1 = std::sqrt(row[1]);
          cell.e1_tilde = std::sqrt(row[2]);
          cell.eps2_u2 = std::sqrt(row[4]);
          if (A.u1_sum.empty()) {
            A.u1_sum.assign(t.sites(), 0.0);
            A.u1_sq.assign(t.sites(), 0.0);
          }
          for (std::size_t x = 0; x < t.sites(); ++x) {
            A.u1_sum[x] += b.u1[x];
            A.u1_sq[x] += b.u1[x] * b.u1[x];
          }
          if (cell.identity_residual) {
            rr.max_identity_residual = std::max(rr.max_identity_residual, *cell.identity_residual);
            std::vector<double> gb;
            for (const auto& g : cell.budgets) gb.push_back(g.second);
            A.budgets.push_back(gb);
          }
        }
        if (max_order >= 2) {
          A.e2.push_back(row[5]);
          A.v1.push_back(row[6]);
          cell.e2 = std::sqrt(row[5]);
        }
        ++A.count;
        cell.ok = true;
        std::ostringstream os;
        os << "m=" << m << " eps=" << e << " L=" << rr.L << " |u_eps-u0|=" << cell.e0;
        log(os.str());
      } catch (const std::exception& ex) {
        ++rr.failures;
        cell.error = ex.what();
        out.warnings.push_back("m=" + std::to_string(m) + " eps=" + std::to_string(eps[r]) +
                               ": " + ex.what());
      }
      cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.cells.push_back(std::move(cell));
    }
  }

  std::vector<double> xs, y0, y1, y1t, yu2, y2;
  for (std::size_t r = 0; r < eps.size(); ++r) {
    RungResult& rr = out.rungs[r];
    Acc& A = acc[r];
    if (!rr.feasible || A.count < 2) {
      if (rr.feasible) rr.note = "fewer than two successful realizations";
      continue;
    }
    rr.e0 = norm_2eps_from_energies(A.e0);
    if (max_order >= 1) {
      rr.e1 = norm_2eps_from_energies(A.e1);
      rr.e1_tilde = norm_2eps_from_energies(A.e1t);
      rr.u1_minus_u1_tilde = norm_2eps_from_energies(A.du1);
      rr.eps2_u2 = norm_2eps_from_energies(A.u2);
      const double n = A.count;
      rr.u1_mean_threshold = bonferroni_t(static_cast<int>(A.u1_sum.size()), A.count - 1);
      for (std::size_t x = 0; x < A.u1_sum.size(); ++x) {
        const double mean = A.u1_sum[x] / n;
        const double var = std::max(0.0, (A.u1_sq[x] - n * mean * mean) / (n - 1.0));
        const double se = std::sqrt(var / n);
        const double z = se > 0.0 ? std::abs(mean) / se : (mean == 0.0 ? 0.0 : INFINITY);
        rr.u1_mean_max_z = std::max(rr.u1_mean_max_z, z);
        if (z > rr.u1_mean_threshold) ++rr.u1_mean_violations;
      }
      if (!A.budgets.empty()) {
        const Group gs[] = {Group::I, Group::II, Group::III, Group::IV, Group::Torus};
        for (std::size_t g = 0; g < 5; ++g) {
          double s2 = 0.0;
          for (const auto& b : A.budgets) s2 += b[g];
          rr.budgets.emplace_back(gs[g], s2 / A.budgets.size());
        }
      }
    }
    if (max_order >= 2) {
      rr.e2 = norm_2eps_from_energies(A.e2);
      rr.v1 = norm_2eps_from_energies(A.v1);
    }
    xs.push_back(rr.eps);
    y0.push_back(rr.e0.value);
    y1.push_back(rr.e1.value);
    y1t.push_back(rr.e1_tilde.value);
    yu2.push_back(rr.eps2_u2.value);
    y2.push_back(rr.e2.value);
  }
  if (xs.size() < 3) {
    out.warnings.push_back("fewer than three usable rungs; no rates fitted");
    return out;
  }
  std::reverse(xs.begin(), xs.end());
  for (auto* y : {&y0, &y1, &y1t, &yu2, &y2}) std::reverse(y->begin(), y->end());
  const double floor = 10.0 * s.solver.tol;
  out.fit_e0 = fit_or_degenerate(xs, y0, floor);
  if (max_order >= 1) {
    out.fit_e1 = fit_or_degenerate(xs, y1, floor);
    out.fit_e1_tilde = fit_or_degenerate(xs, y1t, floor);
    out.fit_eps2_u2 = fit_or_degenerate(xs, yu2, floor);
  }
  if (max_order >= 2) out.fit_e2 = fit_or_degenerate(xs, y2, floor);
  return out;
}

// ---------------------------------------------------------------------------

bool BiasReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const BiasCheck& c) { return c.pass; });
}

BiasSample bias_sample(const EdgeField& a, const std::vector<Corrector>& phi,
                       const SecondCorrectors& psi) {
  const Torus& t = a.torus();
  const int d = t.dim();
  BiasSample s;
  s.d = d;
  const std::size_t n3 = static_cast<std::size_t>(d) * d * d;
  s.grad_psi.resize(n3);
  s.grad_psi_rhs.resize(n3);
  s.grad_psit.resize(n3);
  s.grad_psit_rhs.resize(n3);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) s.a_phi.push_back(edge_times(a, i, phi[j].field).mean());
  }
  for (int k = 0; k < d; ++k) {
    for (int i = 0; i < d; ++i) {
      const SiteField aphik = edge_times(a, i, phi[k].field);
      for (int j = 0; j < d; ++j) {
        const std::size_t idx = (static_cast<std::size_t>(k) * d + i) * d + j;
        s.grad_psi[idx] = edge_times(a, k, grad_dir(psi.at(i, j).field, k)).mean();
        s.grad_psit[idx] = edge_times(a, k, grad_dir(psi.tilde(i, j).field, k)).mean();
        s.grad_psi_rhs[idx] =
            kron(i, j) * aphik.mean() + hadamard(aphik, phi[j].gradient.component_field(i)).mean();
        s.grad_psit_rhs[idx] =
            hadamard(edge_times(a, i, phi[k].gradient.component_field(i)), phi[j].field).mean();
      }
    }
  }
  return s;
}

BiasReport bias_report(const std::vector<BiasSample>& samples, int L) {
  if (samples.size() < 2) throw TwoScaleError("bias identities need M >= 2");
  const int d = samples.front().d;
  const int M = static_cast<int>(samples.size());
  BiasReport rep;
  rep.d = d;
  rep.L = L;
  rep.M = M;
  const int n3 = d * d * d;
  const double z3 = bonferroni_z(n3);

  auto column = [&](auto getter) {
    std::vector<double> v;
    for (const auto& s : samples) v.push_back(getter(s));
    return mean_estimate(v);
  };
  auto finish = [&](BiasCheck& c) {
    const double se = std::hypot(c.lhs_se, c.rhs_se);
    const double diff = std::abs(c.lhs - c.rhs);
    c.z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : INFINITY);
    c.pass = diff <= c.threshold * se;
    if (!c.pass) ++rep.failures;
    rep.checks.push_back(c);
  };

  for (int k = 0; k < d; ++k) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        const std::size_t idx = (static_cast<std::size_t>(k) * d + i) * d + j;
        for (int which = 0; which < 2; ++which) {
          const auto l = column([&](const BiasSample& s) {
            return which == 0 ? s.grad_psi[idx] : s.grad_psit[idx];
          });
          const auto r = column([&](const BiasSample& s) {
            return which == 0 ? s.grad_psi_rhs[idx] : s.grad_psit_rhs[idx];
          });
          BiasCheck c{which == 0 ? "a_k grad_k psi2" : "a_k grad_k psi2t", k, i, j,
                      l.mean, l.stderr_, r.mean, r.stderr_, 0.0, z3, false};
          finish(c);
        }
        for (const auto& s : samples) {
          rep.max_torus_gap = std::max(rep.max_torus_gap,
                                       std::abs(s.grad_psi[idx] - s.grad_psi_rhs[idx]));
          rep.max_torus_gap = std::max(rep.max_torus_gap,
                                       std::abs(s.grad_psit[idx] - s.grad_psit_rhs[idx]));
        }
      }
    }
  }

  // Symmetrized coefficient of the third derivatives of u0 in the bias source.
  std::vector<std::array<int, 3>> triples;
  for (int k = 0; k < d; ++k) {
    for (int i = k; i < d; ++i) {
      for (int j = i; j < d; ++j) triples.push_back({k, i, j});
    }
  }
  const double zc = bonferroni_z(static_cast<int>(triples.size()));
  for (const auto& tr : triples) {
    std::array<int, 3> p = tr;
    std::vector<double> P1, P2, P3, tot;
    for (const auto& s : samples) {
      double a1 = 0.0, a2 = 0.0, a3 = 0.0;
      std::array<int, 3> q = p;
      std::sort(q.begin(), q.end());
      do {
        const int k = q[0], i = q[1], j = q[2];
        const std::size_t idx = (static_cast<std::size_t>(k) * d + i) * d + j;
        a1 += kron(k, i) * s.a_phi[i * d + j];
        a2 -= s.grad_psi[idx];
        a3 += s.grad_psit[idx];
      } while (std::next_permutation(q.begin(), q.end()));
      P1.push_back(a1);
      P2.push_back(a2);
      P3.push_back(a3);
      tot.push_back(a1 + a2 + a3);
      rep.max_torus_gap = std::max(rep.max_torus_gap, std::abs(a1 + a2 + a3));
    }
    const auto e = mean_estimate(tot);
    const double se = std::sqrt(std::pow(mean_estimate(P1).stderr_, 2) +
                                std::pow(mean_estimate(P2).stderr_, 2) +
                                std::pow(mean_estimate(P3).stderr_, 2));
    BiasCheck c{"symmetrized bias coefficient", p[0], p[1], p[2], e.mean, se, 0.0, 0.0, 0.0,
                zc, false};
    finish(c);
  }
  return rep;
}

BiasReport bias_identities(const Ensemble& ens, int d, int L, int M, const SolverSettings& s) {
  const Torus t(d, L);
  std::vector<BiasSample> samples;
  int failures = 0;
  for (int m = 0; m < M; ++m) {
    try {
      const EdgeField a = sample_field(t, ens, m);
      const auto phi = first_correctors(a, 0.0, s);
      const auto psi = second_correctors(a, phi, 1.0, 0.0, s);
      samples.push_back(bias_sample(a, phi, psi));
    } catch (const SolveError&) {
      ++failures;
    }
  }
  BiasReport rep = bias_report(samples, L);
  rep.failures += failures;
  return rep;
}

}  // namespace clab
