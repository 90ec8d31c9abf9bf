#include "clab/correctors.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "clab/field_io.hpp"

namespace clab {

Corrector::Corrector(int order_, std::string label_, double lambda_, SiteField f)
    : order(order_),
      label(std::move(label_)),
      lambda(lambda_),
      field(std::move(f)),
      gradient(grad(field)) {}

void Corrector::anchor_at_origin() {
  field.add_constant(-field[0]);
  gauge = Gauge::Anchored;
}

AssembledRhs build_rhs(const EdgeField& a, const std::vector<RhsTerm>& terms, double offset) {
  const Torus& t = a.torus();
  SiteField rhs(t, offset);
  for (const RhsTerm& term : terms) {
    if (term.parent == nullptr) throw std::invalid_argument("right-hand side term has no parent");
    if (!term.parent->torus().same_sites(t)) {
      throw LatticeError("right-hand side parent lives on a different torus");
    }
    const SiteField& p = *term.parent;
    auto ai = a.component(term.dir);
    SiteField piece(t);
    switch (term.variant) {
      case RhsTerm::Variant::Div: {
        for (std::size_t x = 0; x < t.sites(); ++x) piece[x] = ai[x] * p[x];
        piece = div_star_dir(piece, term.dir);
        break;
      }
      case RhsTerm::Variant::Flux: {
        piece = grad_dir(p, term.dir);
        for (std::size_t x = 0; x < t.sites(); ++x) piece[x] *= ai[x];
        break;
      }
      case RhsTerm::Variant::Mass:
        for (std::size_t x = 0; x < t.sites(); ++x) piece[x] = ai[x] * p[x];
        break;
      case RhsTerm::Variant::Field:
        piece = p;
        break;
    }
    rhs.add_scaled(term.coef, piece);
  }
  const double m = rhs.mean();
  rhs.add_constant(-m);
  return {std::move(rhs), m};
}

Corrector higher_corrector(const EdgeField& a, int order, const std::string& label,
                           const std::vector<RhsTerm>& terms, double lambda,
                           const SolverSettings& s, double offset) {
  AssembledRhs r = build_rhs(a, terms, offset);
  Solution sol = solve_cg(OperatorSpec::hetero(a, lambda), r.rhs, s);
  if (lambda > 0.0) sol.u.add_constant(-sol.u.mean());
  Corrector c(order, label, lambda, std::move(sol.u));
  c.subtracted_mean = r.subtracted_mean;
  c.report = sol.report;
  return c;
}

Corrector first_corrector(const EdgeField& a, int j, double lambda, const SolverSettings& s) {
  const SiteField one(a.torus(), 1.0);
  return higher_corrector(a, 1, "phi_" + std::to_string(j + 1),
                          {{RhsTerm::Variant::Div, j, &one, -1.0}}, lambda, s);
}

std::vector<Corrector> first_correctors(const EdgeField& a, double lambda,
                                        const SolverSettings& s) {
  std::vector<Corrector> out;
  for (int j = 0; j < a.torus().dim(); ++j) out.push_back(first_corrector(a, j, lambda, s));
  return out;
}

SecondCorrectors second_correctors(const EdgeField& a, const std::vector<Corrector>& phi,
                                   double abar, double lambda, const SolverSettings& s) {
  const int d = a.torus().dim();
  if (static_cast<int>(phi.size()) != d) {
    throw std::invalid_argument("second_correctors needs all first correctors");
  }
  const SiteField one(a.torus(), 1.0);
  SecondCorrectors out;
  out.d = d;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const std::string idx = std::to_string(i + 1) + std::to_string(j + 1);
      std::vector<RhsTerm> terms{{RhsTerm::Variant::Flux, i, &phi[j].field, -1.0}};
      if (i == j) terms.push_back({RhsTerm::Variant::Mass, i, &one, -1.0});
      out.psi.push_back(
          higher_corrector(a, 2, "psi2_" + idx, terms, lambda, s, i == j ? abar : 0.0));
      out.psit.push_back(higher_corrector(a, 2, "psi2t_" + idx,
                                          {{RhsTerm::Variant::Div, i, &phi[j].field, -1.0}},
                                          lambda, s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

FluxPotential flux_potential(const SiteField& F, double lambda) {
  const double m = F.mean();
  if (std::abs(m) > 1e-12 * std::max(F.max_abs(), 1e-300)) {
    throw std::invalid_argument("flux potential needs a mean-zero source");
  }
  FluxPotential P{{}, F};
  for (int k = 0; k < F.torus().dim(); ++k) {
    if (F.max_abs() == 0.0) {
      P.psi.emplace_back(F.torus());
      continue;
    }
    P.psi.push_back(solve_constant_fft(1.0, lambda, 1.0, grad_dir(F, k)));
  }
  return P;
}

FluxPotential flux_potential_div(const EdgeField& a, int dir, const SiteField& psi) {
  const Torus& t = a.torus();
  SiteField ap(t);
  auto ai = a.component(dir);
  for (std::size_t x = 0; x < t.sites(); ++x) ap[x] = ai[x] * psi[x];
  FluxPotential P{std::vector<SiteField>(t.dim(), SiteField(t)), div_star_dir(ap, dir)};
  P.psi[dir] = std::move(ap);
  return P;
}

double flux_potential_residual(const FluxPotential& P) {
  const Torus& t = P.source.torus();
  SiteField div(t);
  for (int k = 0; k < t.dim(); ++k) div += div_star_dir(P.psi[k], k);
  return max_abs_diff(div, P.source);
}

// ---------------------------------------------------------------------------

LadderReport lambda_ladder(const std::function<Corrector(double)>& build,
                           const std::vector<double>& lambdas) {
  for (std::size_t i = 1; i < lambdas.size(); ++i) {
    if (!(lambdas[i] < lambdas[i - 1]) || lambdas[i] < 0.0) {
      throw std::invalid_argument("lambda ladder must be strictly decreasing and nonnegative");
    }
  }
  LadderReport rep;
  for (double lambda : lambdas) {
    Corrector c = build(lambda);
    const Torus& t = c.field.torus();
    const double n = static_cast<double>(t.sites());
    LadderRung r;
    r.lambda = lambda;
    r.report = c.report;
    for (std::size_t x = 0; x < t.sites(); ++x) {
      const double v2 = c.field[x] * c.field[x];
      double g2 = 0.0;
      for (int i = 0; i < t.dim(); ++i) g2 += c.gradient.at(i, x) * c.gradient.at(i, x);
      r.field_m2 += v2 / n;
      r.field_m4 += v2 * v2 / n;
      r.grad_m2 += g2 / n;
      r.grad_m4 += g2 * g2 / n;
    }
    if (!rep.rungs.empty()) {
      const double prev = rep.rungs.back().field_m2;
      r.rel_change_m2 = prev == 0.0 ? (r.field_m2 == 0.0 ? 0.0 : INFINITY)
                                    : std::abs(r.field_m2 - prev) / prev;
    }
    rep.rungs.push_back(r);
  }
  rep.stabilized = rep.rungs.size() >= 2 && rep.rungs.back().rel_change_m2 < 0.1;
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

double flux_factor(const Corrector& phi, int k, int dir, std::size_t x) {
  return phi.gradient.at(dir, x) + (dir == k ? 1.0 : 0.0);
}

void require_mass(double lambda, const char* what) {
  if (!(lambda > 0.0)) throw std::invalid_argument(std::string(what) + " needs lambda > 0");
}

}  // namespace

SiteField sensitivity_green(const EdgeField& a, const Corrector& phi, int k, int dir,
                            std::size_t x, const SolverSettings& s) {
  require_mass(phi.lambda, "sensitivity_green");
  SiteField v = green_dipole(OperatorSpec::hetero(a, phi.lambda), a.torus(), dir, x, s);
  v *= flux_factor(phi, k, dir, x);
  return v;
}

double sensitivity_energy_at_origin(const EdgeField& a, const Corrector& phi, int k,
                                    const SolverSettings& s) {
  require_mass(phi.lambda, "sensitivity_energy_at_origin");
  const Torus& t = a.torus();
  SiteField g = green_column(OperatorSpec::hetero(a, phi.lambda), t, 0, s);
  VectorField dg = grad(g);
  double total = 0.0;
  for (int i = 0; i < t.dim(); ++i) {
    for (std::size_t z = 0; z < t.sites(); ++z) {
      const double v = flux_factor(phi, k, i, z) * dg.at(i, z);
      total += v * v;
    }
  }
  return total;
}

double quenched_bound(const EdgeField& a, double lambda, int dir, std::size_t x,
                      const SolverSettings& s) {
  const Torus& t = a.torus();
  if (t.sites() > 4096) throw std::invalid_argument("quenched bound limited to 4096 sites");
  SiteField v = green_dipole(OperatorSpec::hetero(a, lambda), t, dir, x, s);
  VectorField dv = grad(v);
  return inner(dv, dv);
}

// ---------------------------------------------------------------------------

CorrectorCache::CorrectorCache(std::filesystem::path root, std::string run_id)
    : root_(std::move(root)), run_id_(std::move(run_id)) {}

std::filesystem::path CorrectorCache::path(std::uint64_t m, int order, const std::string& variant,
                                           const std::string& indices, double lambda) const {
  char lam[32];
  std::snprintf(lam, sizeof lam, "%.6e", lambda);
  return root_ / run_id_ / std::to_string(m) /
         (std::to_string(order) + "_" + variant + "_" + indices + "_" + lam + ".field");
}

std::optional<Corrector> CorrectorCache::load(std::uint64_t m, int order,
                                              const std::string& variant,
                                              const std::string& indices, double lambda,
                                              const Torus& t) const {
  const auto p = path(m, order, variant, indices, lambda);
  if (!std::filesystem::exists(p)) return std::nullopt;
  FieldFile f = read_field(p);
  if (f.d != t.dim() || f.L != t.side_sites() || f.kind != FieldKind::Site) {
    throw FieldIoError("cached corrector " + p.string() + " does not match the torus");
  }
  Corrector c(order, f.meta.value("label", variant + "_" + indices), lambda,
              SiteField(t, std::move(f.values)));
  c.gauge = f.meta.value("gauge", "mean-zero") == "anchored" ? Gauge::Anchored : Gauge::MeanZero;
  c.subtracted_mean = f.meta.value("subtracted_mean", 0.0);
  c.report.rel_residual = f.meta.value("residual", 0.0);
  c.report.iterations = f.meta.value("iterations", 0);
  c.report.converged = true;
  return c;
}

void CorrectorCache::store(std::uint64_t m, const std::string& variant, const std::string& indices,
                           const Corrector& c) const {
  nlohmann::json meta{{"label", c.label},
                      {"order", c.order},
                      {"variant", variant},
                      {"indices", indices},
                      {"lambda", c.lambda},
                      {"realization", m},
                      {"gauge", c.gauge == Gauge::Anchored ? "anchored" : "mean-zero"},
                      {"subtracted_mean", c.subtracted_mean},
                      {"residual", c.report.rel_residual},
                      {"iterations", c.report.iterations}};
  write_field(path(m, c.order, variant, indices, c.lambda), c.field, meta);
}

Corrector CorrectorCache::get(std::uint64_t m, int order, const std::string& variant,
                              const std::string& indices, double lambda, const Torus& t,
                              const std::function<Corrector()>& build) const {
  if (auto c = load(m, order, variant, indices, lambda, t)) return std::move(*c);
  Corrector c = build();
  store(m, variant, indices, c);
  return c;
}

std::optional<std::filesystem::path> cache_root_from_env() {
  const char* v = std::getenv("CORRECTOR_LAB_CACHE");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::filesystem::path(v);
}

}  // namespace clab
