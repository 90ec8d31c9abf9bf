#include "clab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>

#include "clab/correctors.hpp"
#include "clab/field_io.hpp"
#include "clab/kernels.hpp"
#include "clab/statistics.hpp"
#include "clab/twoscale.hpp"

#ifndef CLAB_VERSION
#define CLAB_VERSION "unknown"
#endif

namespace clab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kPrerunOffset = std::uint64_t{1} << 32;
constexpr std::uint64_t kTableOffset = std::uint64_t{2} << 32;

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json fit_json(const RateFit& f) {
  return {{"slope", f.slope},     {"intercept", f.intercept}, {"r2", f.r2},
          {"half_width", f.half_width}, {"degenerate", f.degenerate},
          {"x", f.x},             {"y", f.y}};
}

void fit_row(RunResult& r, const std::string& name, const RateFit& f, int d, int L, int M) {
  r.rows.push_back({name, d, L, 0.0, 0, M, f.degenerate ? NAN : f.slope,
                    f.degenerate ? NAN : f.half_width / 1.96});
}

class Runner {
 public:
  Runner(const ExperimentConfig& c, const Logger& log) : c_(c), log_(log) {}

  RunResult run() {
    r_.warnings = c_.warnings;
    if (!c_.solver.deterministic) kernels::set_threads(c_.threads);
    r_.summary["experiment"] = kind_name(c_.kind);
    r_.summary["law"] = c_.ensemble.law.describe();
    r_.summary["seed"] = c_.ensemble.seeds.master;
    r_.summary["d"] = c_.d;
    switch (c_.kind) {
      case ExperimentKind::Correctors: correctors(); break;
      case ExperimentKind::Moments: moments(); break;
      case ExperimentKind::GreenDecay: green(); break;
      case ExperimentKind::Effective: effective(); break;
      case ExperimentKind::TwoscaleRates: twoscale(); break;
      case ExperimentKind::BiasIdentities: bias(); break;
      case ExperimentKind::Sensitivity: sensitivity(); break;
      case ExperimentKind::Order3: order3(); break;
    }
    return std::move(r_);
  }

 private:
  void log(const std::string& s) const {
    if (log_) log_(s);
  }

  // Runs one cell, recording its status; returns false on failure.
  bool cell(const std::string& id, const std::function<void()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    CellStatus st{id, true, "", 0.0, 0};
    try {
      body();
    } catch (const SolveError& e) {
      st.ok = false;
      st.error = e.what();
      st.cg_restarts = e.report.restarts;
    } catch (const std::exception& e) {
      st.ok = false;
      st.error = e.what();
    }
    st.seconds = seconds_since(t0);
    if (!st.ok) log("cell " + id + " failed: " + st.error);
    r_.statuses.push_back(st);
    return st.ok;
  }

  Corrector build_order(const EdgeField& a, int order, double lambda) {
    if (order == 1) return first_corrector(a, 0, lambda, c_.solver);
    const Corrector phi = first_corrector(a, 0, lambda, c_.solver);
    const SiteField one(a.torus(), 1.0);
    return higher_corrector(a, 2, "psi2_11",
                            {{RhsTerm::Variant::Flux, 0, &phi.field, -1.0},
                             {RhsTerm::Variant::Mass, 0, &one, -1.0}},
                            lambda, c_.solver);
  }

  double abar_value(int d) {
    if (c_.abar) return *c_.abar;
    log("pre-run for abar: L=" + std::to_string(c_.prerun_L) + " M=" + std::to_string(c_.prerun_M));
    const auto ec = effective_coefficient(c_.ensemble, d, c_.prerun_L, std::max(2, c_.prerun_M),
                                          c_.solver, kPrerunOffset);
    r_.summary["abar_prerun"] = {{"abar", ec.scalar}, {"stderr", ec.scalar_se},
                                 {"L", c_.prerun_L}, {"M", ec.M}};
    r_.rows.push_back({"abar_prerun", d, c_.prerun_L, 0.0, 0, ec.M, ec.scalar, ec.scalar_se});
    return ec.scalar;
  }

  void correctors() {
    if (c_.order > 2) throw ConfigError("correctors experiment supports order 1 or 2");
    const auto root = cache_root_from_env();
    for (int L : c_.L) {
      const Torus t(c_.d, L);
      std::optional<CorrectorCache> cache;
      if (root) {
        cache.emplace(*root, "c" + content_hash(c_.ensemble.law.describe() + "/" +
                                                std::to_string(c_.ensemble.seeds.master) + "/" +
                                                std::to_string(c_.d) + "/" + std::to_string(L)));
      }
      for (double lambda : c_.lambda) {
        std::vector<double> fm2, gm2, iters, resid;
        for (int m = 0; m < c_.M; ++m) {
          const std::string id = "L" + std::to_string(L) + "/lambda" + num(lambda) + "/m" +
                                 std::to_string(m);
          cell(id, [&] {
            const EdgeField a = sample_field(t, c_.ensemble, m);
            auto build = [&] { return build_order(a, c_.order, lambda); };
            const std::string variant = c_.order == 1 ? "phi" : "psi2";
            const std::string idx = c_.order == 1 ? "1" : "11";
            const Corrector k = cache ? cache->get(m, c_.order, variant, idx, lambda, t, build)
                                      : build();
            double f2 = 0.0, g2 = 0.0;
            for (std::size_t x = 0; x < t.sites(); ++x) {
              f2 += k.field[x] * k.field[x];
              for (int i = 0; i < c_.d; ++i) g2 += k.gradient.at(i, x) * k.gradient.at(i, x);
            }
            fm2.push_back(f2 / t.sites());
            gm2.push_back(g2 / t.sites());
            iters.push_back(k.report.iterations);
            resid.push_back(k.report.rel_residual);
            r_.cells.push_back({{"id", id}, {"label", k.label}, {"lambda", lambda},
                                {"field_m2", fm2.back()}, {"grad_m2", gm2.back()},
                                {"iterations", k.report.iterations},
                                {"rel_residual", k.report.rel_residual},
                                {"subtracted_mean", k.subtracted_mean}});
            if (c_.export_fields) {
              const std::string rel = "fields/" + k.label + "_L" + std::to_string(L) + "_lambda" +
                                      num(lambda) + "_m" + std::to_string(m) + ".field";
              write_field(fs::path(c_.output) / rel, k.field,
                          {{"label", k.label}, {"lambda", lambda}, {"realization", m}});
              r_.files.push_back(rel);
              r_.files.push_back(rel + ".json");
            }
          });
        }
        const std::string lab = c_.order == 1 ? "phi1" : "psi2_11";
        if (fm2.size() >= 2) {
          auto push = [&](const std::string& q, const std::vector<double>& v, int p) {
            const auto e = mean_estimate(v);
            r_.rows.push_back({q, c_.d, L, lambda, p, e.M, e.mean, e.stderr_});
          };
          push(lab + "_spatial_m2", fm2, 2);
          push(lab + "_grad_spatial_m2", gm2, 2);
          push(lab + "_cg_iterations", iters, 1);
        }
      }
    }
  }

  void moments() {
    if (c_.order > 2) throw ConfigError("moments experiment supports order 1 or 2");
    for (int L : c_.L) {
      const Torus t(c_.d, L);
      const std::string label = c_.order == 1 ? "phi1" : "psi2_11";
      std::vector<SiteField> last;
      const double lambda_last = c_.lambda.back();
      const MomentScan scan = moment_scan(
          [&](double lambda, int m) {
            const EdgeField a = sample_field(t, c_.ensemble, m);
            Corrector k = build_order(a, c_.order, lambda);
            if (lambda == lambda_last && !c_.lags.empty() && c_.order == 1) last.push_back(k.field);
            return k;
          },
          c_.p, c_.lambda, c_.M, label);
      for (const auto& e : scan.estimates) {
        r_.rows.push_back({e.quantity, c_.d, L, e.param, e.p, e.M, e.mean, e.stderr_});
      }
      for (double lambda : c_.lambda) {
        for (int m = 0; m < c_.M; ++m) {
          CellStatus st{"L" + std::to_string(L) + "/lambda" + num(lambda) + "/m" + std::to_string(m),
                        true, "", 0.0, 0};
          for (const auto& f : scan.failures) {
            if (f.lambda == lambda && f.m == m) {
              st.ok = false;
              st.error = f.error;
            }
          }
          r_.statuses.push_back(st);
        }
      }
      if (!last.empty()) {
        std::vector<int> axes;
        for (int i = 0; i < c_.d; ++i) axes.push_back(i);
        const CorrelationReport cr = correlation_decay(last, c_.lags, axes);
        for (const auto& l : cr.lags) {
          r_.rows.push_back({label + "_correlation", c_.d, L, static_cast<double>(l.lag), 2,
                             static_cast<int>(last.size()), l.mean, l.stderr_});
        }
        for (const auto& w : cr.warnings) r_.warnings.push_back(w);
        if (cr.fit) {
          fit_row(r_, label + "_correlation_slope", *cr.fit, c_.d, L, static_cast<int>(last.size()));
          r_.summary["correlation_fit"] = fit_json(*cr.fit);
        }
      }
    }
  }

  void green() {
    for (int L : c_.L) {
      const Torus t(c_.d, L);
      for (int p : c_.p) {
        const double lambda = c_.lambda.front();
        GreenDecayReport g;
        const bool ok = cell("L" + std::to_string(L) + "/p" + std::to_string(p), [&] {
          g = green_decay_scan(t, c_.ensemble, lambda, p, c_.radii, c_.M, c_.solver);
        });
        if (!ok) continue;
        for (std::size_t i = 0; i < g.radii.size(); ++i) {
          r_.rows.push_back({"green_grad_norm", c_.d, L, g.radii[i], p, g.grad[i].M,
                             g.grad[i].mean, g.grad[i].stderr_});
          r_.rows.push_back({"green_hess_norm", c_.d, L, g.radii[i], p, g.hess[i].M,
                             g.hess[i].mean, g.hess[i].stderr_});
        }
        fit_row(r_, "green_grad_slope", g.grad_fit, c_.d, L, c_.M);
        fit_row(r_, "green_hess_slope", g.hess_fit, c_.d, L, c_.M);
        r_.summary["green"].push_back({{"L", L}, {"p", p}, {"lambda", lambda},
                                       {"grad_fit", fit_json(g.grad_fit)},
                                       {"hess_fit", fit_json(g.hess_fit)}});
        for (const auto& w : g.warnings) r_.warnings.push_back(w);
      }
    }
  }

  void effective() {
    for (int L : c_.L) {
      EffectiveCoefficient ec;
      const bool ok = cell("L" + std::to_string(L), [&] {
        ec = effective_coefficient(c_.ensemble, c_.d, L, c_.M, c_.solver);
      });
      if (!ok) continue;
      for (const auto& f : ec.failures) r_.statuses.push_back({"L" + std::to_string(L), false, f, 0.0, 0});
      r_.rows.push_back({"abar", c_.d, L, 0.0, 1, ec.M, ec.scalar, ec.scalar_se});
      for (int i = 0; i < c_.d; ++i) {
        for (int j = 0; j < c_.d; ++j) {
          r_.rows.push_back({"a_hom_" + std::to_string(i + 1) + std::to_string(j + 1), c_.d, L,
                             0.0, 1, ec.M, ec.matrix[i * c_.d + j], ec.matrix_se[i * c_.d + j]});
        }
      }
      const double hm = c_.ensemble.law.harmonic_mean();
      const double am = c_.ensemble.law.arithmetic_mean();
      r_.rows.push_back({"law_harmonic_mean", c_.d, L, 0.0, 1, 0, hm, 0.0});
      r_.rows.push_back({"law_arithmetic_mean", c_.d, L, 0.0, 1, 0, am, 0.0});
      r_.summary["effective"].push_back(
          {{"L", L}, {"abar", ec.scalar}, {"stderr", ec.scalar_se}, {"matrix", ec.matrix},
           {"matrix_stderr", ec.matrix_se}, {"harmonic_mean", hm}, {"arithmetic_mean", am},
           {"within_bounds_3se", ec.scalar >= hm - 3 * ec.scalar_se &&
                                     ec.scalar <= am + 3 * ec.scalar_se}});
    }
  }

  MacroProblem macro(double abar) const {
    MacroProblem p = MacroProblem::standard(abar, c_.side);
    p.alpha = c_.alpha;
    if (c_.width) p.width = *c_.width;
    p.eps_ladder = c_.eps;
    return p;
  }

  void twoscale() {
    const int d = c_.d;
    double abar = 0.0;
    if (!cell("prerun/abar", [&] { abar = abar_value(d); })) return;
    const MacroProblem p = macro(abar);
    std::optional<CoefficientTable> table;
    const bool order2 = std::find(c_.orders.begin(), c_.orders.end(), 2) != c_.orders.end();
    if (order2 && !cell("prerun/table", [&] {
          table = coefficient_prerun(c_.ensemble, d, c_.prerun_L, std::max(1, c_.prerun_M), abar,
                                     true, c_.solver, kTableOffset);
        })) {
      return;
    }
    ScanSettings s;
    s.M = c_.M;
    s.orders = c_.orders;
    s.solver = c_.solver;
    s.table = table ? &*table : nullptr;
    s.log = log_;
    const ExpansionScan scan = expansion_error_scan(c_.ensemble, d, p, s);
    for (const auto& w : scan.warnings) r_.warnings.push_back(w);
    for (const auto& cl : scan.cells) {
      std::ostringstream id;
      id << "eps" << num(cl.eps) << "/m" << cl.m;
      r_.statuses.push_back({id.str(), cl.ok, cl.error, cl.seconds, 0});
      json j{{"id", id.str()}, {"m", cl.m}, {"eps", cl.eps}, {"L", cl.L}, {"ok", cl.ok},
             {"norm_u_eps_minus_u0", cl.e0}, {"hetero_cg_iterations", cl.hetero_iterations}};
      if (!cl.ok) j["error"] = cl.error;
      if (max_order() >= 1) {
        j["norm_minus_u1"] = cl.e1;
        j["norm_minus_u1_tilde"] = cl.e1_tilde;
        j["norm_eps2_u2"] = cl.eps2_u2;
      }
      if (order2) j["norm_order2_remainder"] = cl.e2;
      if (cl.identity_residual) j["remainder_identity_residual"] = *cl.identity_residual;
      for (const auto& [g, v] : cl.budgets) j["group_budgets"][group_name(g)] = v;
      r_.cells.push_back(j);
    }
    for (const auto& rr : scan.rungs) {
      if (!rr.feasible) {
        r_.statuses.push_back({"eps" + num(rr.eps), false, "infeasible: " + rr.note, 0.0, 0});
        continue;
      }
      if (rr.e0.M == 0) continue;
      auto row = [&](const std::string& q, const NormEstimate& n) {
        r_.rows.push_back({q, d, rr.L, rr.eps, 2, n.M, n.value, n.stderr_});
      };
      row("norm_u_eps_minus_u0", rr.e0);
      if (max_order() >= 1) {
        row("norm_minus_u1", rr.e1);
        row("norm_minus_u1_tilde", rr.e1_tilde);
        row("norm_u1_minus_u1_tilde", rr.u1_minus_u1_tilde);
        row("norm_eps2_u2", rr.eps2_u2);
        r_.rows.push_back({"u1_mean_violations", d, rr.L, rr.eps, 1, rr.e0.M,
                           static_cast<double>(rr.u1_mean_violations), 0.0});
      }
      if (order2) {
        row("norm_order2_remainder", rr.e2);
        row("norm_v1", rr.v1);
      }
      json jr{{"eps", rr.eps}, {"L", rr.L}, {"M", rr.e0.M}, {"failures", rr.failures},
              {"max_identity_residual", rr.max_identity_residual},
              {"u1_mean_max_z", rr.u1_mean_max_z}, {"u1_mean_threshold", rr.u1_mean_threshold},
              {"u1_mean_violations", rr.u1_mean_violations}};
      for (const auto& [g, v] : rr.budgets) jr["group_budgets"][group_name(g)] = v;
      r_.summary["rungs"].push_back(jr);
    }
    auto fit = [&](const char* name, const std::optional<RateFit>& f) {
      if (!f) return;
      fit_row(r_, std::string("slope_") + name, *f, d, 0, c_.M);
      r_.summary["fits"][name] = fit_json(*f);
    };
    fit("norm_u_eps_minus_u0", scan.fit_e0);
    fit("norm_minus_u1", scan.fit_e1);
    fit("norm_minus_u1_tilde", scan.fit_e1_tilde);
    fit("norm_eps2_u2", scan.fit_eps2_u2);
    fit("norm_order2_remainder", scan.fit_e2);
    r_.summary["abar"] = abar;
    r_.summary["source_width"] = p.width;
  }

  int max_order() const { return *std::max_element(c_.orders.begin(), c_.orders.end()); }

  void bias() {
    for (int L : c_.L) {
      BiasReport rep;
      if (!cell("L" + std::to_string(L), [&] {
            rep = bias_identities(c_.ensemble, c_.d, L, c_.M, c_.solver);
          })) {
        continue;
      }
      json checks = json::array();
      for (const auto& ch : rep.checks) {
        const std::string idx = std::to_string(ch.k + 1) + std::to_string(ch.i + 1) +
                                std::to_string(ch.j + 1);
        std::string tag = ch.identity == "a_k grad_k psi2"    ? "bias_grad_psi2"
                          : ch.identity == "a_k grad_k psi2t" ? "bias_grad_psi2t"
                                                              : "bias_symmetrized";
        r_.rows.push_back({tag + "_lhs_" + idx, c_.d, L, 0.0, 1, rep.M, ch.lhs, ch.lhs_se});
        r_.rows.push_back({tag + "_rhs_" + idx, c_.d, L, 0.0, 1, rep.M, ch.rhs, ch.rhs_se});
        checks.push_back({{"identity", ch.identity}, {"k", ch.k + 1}, {"i", ch.i + 1},
                          {"j", ch.j + 1}, {"z", ch.z}, {"threshold", ch.threshold},
                          {"pass", ch.pass}});
      }
      r_.summary["bias"].push_back({{"L", L}, {"M", rep.M}, {"all_pass", rep.all_pass()},
                                    {"max_torus_gap", rep.max_torus_gap}, {"checks", checks}});
    }
  }

  void sensitivity() {
    const int L = c_.L.front();
    const Torus t(c_.d, L);
    const double lambda = c_.lambda.front();
    std::mt19937_64 g(c_.ensemble.seeds.master);
    const EdgeField a = sample_field(t, c_.ensemble, 0);
    double worst = 0.0;
    for (int pr = 0; pr < c_.pairs; ++pr) {
      const int k = static_cast<int>(g() % c_.d);
      const int dir = static_cast<int>(g() % c_.d);
      const std::size_t x = g() % t.sites();
      const std::size_t y = g() % t.sites();
      cell("pair" + std::to_string(pr), [&] {
        const Corrector phi = first_corrector(a, k, lambda, c_.solver);
        const SiteField formula = sensitivity_green(a, phi, k, dir, x, c_.solver);
        const SiteField fd = vertical_difference(
            [&](const EdgeField& b) { return first_corrector(b, k, lambda, c_.solver).field; }, a,
            dir, x, c_.h);
        const double scale = std::max(std::abs(formula[y]), 1e-3 * formula.max_abs());
        const double rel = std::abs(formula[y] - fd[y]) / scale;
        worst = std::max(worst, rel);
        r_.rows.push_back({"sensitivity_rel_error", c_.d, L, static_cast<double>(pr), 1, 1, rel, 0.0});
        r_.cells.push_back({{"pair", pr}, {"k", k + 1}, {"edge_dir", dir + 1}, {"edge_site", x},
                            {"y", y}, {"formula", formula[y]}, {"finite_difference", fd[y]},
                            {"rel_error", rel}});
      });
    }
    r_.summary["max_rel_error"] = worst;
    if (c_.M >= 2) {
      std::vector<double> v, en;
      cell("spectral-gap", [&] {
        for (int m = 0; m < c_.M; ++m) {
          const EdgeField am = sample_field(t, c_.ensemble, m);
          const Corrector phi = first_corrector(am, 0, lambda, c_.solver);
          v.push_back(phi.field[0]);
          en.push_back(sensitivity_energy_at_origin(am, phi, 0, c_.solver));
        }
      });
      if (v.size() >= 2) {
        const auto e = mean_estimate(en);
        double mean = 0.0, var = 0.0;
        for (double x : v) mean += x / v.size();
        for (double x : v) var += (x - mean) * (x - mean) / (v.size() - 1);
        r_.rows.push_back({"sensitivity_energy", c_.d, L, lambda, 2, e.M, e.mean, e.stderr_});
        r_.rows.push_back({"phi1_origin_variance", c_.d, L, lambda, 2, e.M, var, 0.0});
        r_.summary["variance_over_energy"] = var / e.mean;
      }
    }
  }

  void order3() {
    const int d = c_.d;
    double abar = 0.0;
    if (!cell("prerun/abar", [&] { abar = abar_value(d); })) return;
    const MacroProblem p = macro(abar);
    const double eps = c_.eps.front();
    CoefficientTable table;
    if (!cell("prerun/table", [&] {
          table = coefficient_prerun(c_.ensemble, d, c_.prerun_L, std::max(1, c_.prerun_M), abar,
                                     true, c_.solver, kTableOffset);
        })) {
      return;
    }
    const int L = p.sites_per_side(eps);
    std::vector<double> u3, v1, v11, v2;
    double l4 = 0.0, ident = 0.0;
    BundleOptions bo;
    bo.solve_hetero = false;
    bo.corrector = c_.solver;
    for (int m = 0; m < c_.M; ++m) {
      cell("m" + std::to_string(m), [&] {
        const EdgeField a = sample_field(p.grid(d, eps), c_.ensemble, m);
        const ExpansionBundle b = build_bundle(a, p, eps, bo);
        const Order3Pieces o = order3_pieces(a, b, p.alpha, table, c_.solver);
        u3.push_back(eps_energy(o.u3, eps));
        v1.push_back(eps_energy(o.v1, eps));
        v11.push_back(eps_energy(o.v11, eps));
        v2.push_back(eps_energy(o.v2, eps));
        l4 = std::max(l4, o.l4_residual);
        ident = std::max(ident, o.identity_residual);
        r_.cells.push_back({{"m", m}, {"l4_residual", o.l4_residual},
                            {"identity_residual", o.identity_residual},
                            {"norm_u3", std::sqrt(u3.back())}, {"norm_v1", std::sqrt(v1.back())},
                            {"norm_v2", std::sqrt(v2.back())}});
      });
    }
    if (u3.size() >= 2) {
      auto row = [&](const std::string& q, const std::vector<double>& e) {
        const NormEstimate n = norm_2eps_from_energies(e);
        r_.rows.push_back({q, d, L, eps, 2, n.M, n.value, n.stderr_});
      };
      row("norm_u3", u3);
      row("norm_v1", v1);
      row("norm_v11", v11);
      row("norm_v2", v2);
    }
    r_.rows.push_back({"max_l4_residual", d, L, eps, 0, static_cast<int>(u3.size()), l4, 0.0});
    r_.rows.push_back({"max_order3_identity_residual", d, L, eps, 0, static_cast<int>(u3.size()),
                       ident, 0.0});
    r_.summary["abar"] = abar;
  }

  const ExperimentConfig& c_;
  Logger log_;
  RunResult r_;
};

}  // namespace

int RunResult::exit_code() const {
  for (const auto& s : statuses) {
    if (!s.ok) return 2;
  }
  return 0;
}

RunResult run_experiment(const ExperimentConfig& c, const Logger& log) {
  return Runner(c, log).run();
}

std::string csv_text(const std::vector<CsvRow>& rows) {
  std::ostringstream os;
  os << "quantity,d,L,param,p,M,mean,stderr\n";
  for (const auto& r : rows) {
    os << r.quantity << ',' << r.d << ',' << r.L << ',' << num(r.param) << ',' << r.p << ','
       << r.M << ',' << num(r.mean) << ',' << num(r.stderr_) << '\n';
  }
  return os.str();
}

std::string code_version() { return CLAB_VERSION; }

void write_artifacts(const ExperimentConfig& c, const RunResult& r) {
  const fs::path out(c.output);
  fs::create_directories(out);
  write_text_atomic(out / "results.csv", csv_text(r.rows));
  write_text_atomic(out / "summary.json", r.summary.dump(2) + "\n");
  write_text_atomic(out / "cells.json", r.cells.dump(2) + "\n");

  json m;
  m["schema_version"] = 1;
  m["config_hash"] = content_hash(c.text);
  m["code_version"] = code_version();
  m["experiment"] = kind_name(c.kind);
  m["exit_code"] = r.exit_code();
  json cells = json::array();
  for (const auto& s : r.statuses) {
    json j{{"id", s.id}, {"status", s.ok ? "ok" : "failed"}, {"seconds", s.seconds}};
    if (!s.ok) j["error"] = s.error;
    if (s.cg_restarts) j["cg_restarts"] = s.cg_restarts;
    cells.push_back(j);
  }
  m["cells"] = cells;
  m["warnings"] = r.warnings;
  std::vector<std::string> files{"results.csv", "summary.json", "cells.json"};
  files.insert(files.end(), r.files.begin(), r.files.end());
  m["files"] = files;
  write_text_atomic(out / "manifest.json", m.dump(2) + "\n");
}

int run_config_file(const std::string& path, const Logger& log, std::ostream& err) {
  ExperimentConfig c;
  try {
    c = load_config(path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  }
  for (const auto& w : c.warnings) err << "warning: " << w << "\n";
  RunResult r;
  try {
    r = run_experiment(c, log);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    r.statuses.push_back({"experiment", false, e.what(), 0.0, 0});
    err << "error: " << e.what() << "\n";
  }
  write_artifacts(c, r);
  const int code = r.exit_code();
  if (code != 0) {
    int failed = 0;
    for (const auto& s : r.statuses) failed += s.ok ? 0 : 1;
    err << failed << " cell(s) failed; see " << (fs::path(c.output) / "manifest.json").string()
        << "\n";
  }
  return code;
}

}  // namespace clab
