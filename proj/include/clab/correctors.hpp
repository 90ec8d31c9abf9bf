#pragma once

// Corrector hierarchy on one realization: first-order correctors, flux
// potentials, second-order correctors, generic higher-order solves driven by
// DIV/FLUX/MASS right-hand sides, lambda ladders and sensitivities.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clab/lattice.hpp"
#include "clab/solver.hpp"
#include "json.hpp"

namespace clab {

enum class Gauge { MeanZero, Anchored };

struct Corrector {
  int order = 1;
  std::string label;
  double lambda = 0.0;
  Gauge gauge = Gauge::MeanZero;
  SiteField field;
  VectorField gradient;
  /// Torus mean removed from the right-hand side before solving.
  double subtracted_mean = 0.0;
  SolveReport report;

  Corrector(int order, std::string label, double lambda, SiteField f);
  /// Re-gauges so that field(0) = 0; the gradient is unchanged.
  void anchor_at_origin();
};

/// One summand of a corrector right-hand side, `coef` times
///   DIV:   div*_i (a_i psi)
///   FLUX:  a_i grad_i psi
///   MASS:  a_i psi
///   FIELD: psi
struct RhsTerm {
  enum class Variant { Div, Flux, Mass, Field };
  Variant variant = Variant::Div;
  int dir = 0;
  const SiteField* parent = nullptr;
  double coef = 1.0;
};

struct AssembledRhs {
  SiteField rhs;
  double subtracted_mean = 0.0;
};

/// Sum of the terms plus `offset`, with its torus mean subtracted.
AssembledRhs build_rhs(const EdgeField& a, const std::vector<RhsTerm>& terms, double offset = 0.0);

/// (lambda + div* a grad) psi = rhs, mean-zero gauge.
Corrector higher_corrector(const EdgeField& a, int order, const std::string& label,
                           const std::vector<RhsTerm>& terms, double lambda,
                           const SolverSettings& s = {}, double offset = 0.0);

/// (lambda + div* a grad) phi = -div*(a e_j).
Corrector first_corrector(const EdgeField& a, int j, double lambda, const SolverSettings& s = {});
std::vector<Corrector> first_correctors(const EdgeField& a, double lambda,
                                        const SolverSettings& s = {});

struct SecondCorrectors {
  int d = 0;
  /// psi[i * d + j] and psit[i * d + j].
  std::vector<Corrector> psi;
  std::vector<Corrector> psit;
  const Corrector& at(int i, int j) const { return psi[i * d + j]; }
  const Corrector& tilde(int i, int j) const { return psit[i * d + j]; }
};

/// div* a grad psi_ij = -[a_i (1_{i=j} + grad_i phi_j) - abar 1_{i=j}] and
/// div* a grad psit_ij = -div*_i (a_i phi_j), both right-hand sides centered.
SecondCorrectors second_correctors(const EdgeField& a, const std::vector<Corrector>& phi,
                                   double abar, double lambda, const SolverSettings& s = {});

struct FluxPotential {
  std::vector<SiteField> psi;
  SiteField source;
};

/// Psi_k = (lambda + div* grad)^{-1} grad_k F through the FFT.
FluxPotential flux_potential(const SiteField& F, double lambda = 0.0);
/// For F = div*_i (a_i psi) the potential is (a_i psi) e_i.
FluxPotential flux_potential_div(const EdgeField& a, int dir, const SiteField& psi);
/// || div* Psi - F ||_inf
double flux_potential_residual(const FluxPotential& P);

struct LadderRung {
  double lambda = 0.0;
  double field_m2 = 0.0;
  double field_m4 = 0.0;
  double grad_m2 = 0.0;
  double grad_m4 = 0.0;
  double rel_change_m2 = 0.0;
  SolveReport report;
};

struct LadderReport {
  std::vector<LadderRung> rungs;
  bool stabilized = false;
};

/// Builds the corrector at each lambda (strictly decreasing), reporting
/// spatial moments <|psi|^p>, <|grad psi|^p> for p = 2, 4. Stabilized when the
/// last two second field moments differ by less than 10%.
LadderReport lambda_ladder(const std::function<Corrector(double)>& build,
                           const std::vector<double>& lambdas);

/// d_e phi_k^lambda(y) = -grad G(y, e) (grad phi_k + e_k)(e) for the edge
/// (x, x + e_dir), via one dipole Green column.
SiteField sensitivity_green(const EdgeField& a, const Corrector& phi, int k, int dir,
                            std::size_t x, const SolverSettings& s = {});

/// sum_e |d_e phi_k^lambda(0)|^2 from a single Green column G(., 0).
double sensitivity_energy_at_origin(const EdgeField& a, const Corrector& phi, int k,
                                    const SolverSettings& s = {});

/// sum_e |grad grad G(b, e)|^2 for the edge b = (x, x + e_dir); small tori only.
double quenched_bound(const EdgeField& a, double lambda, int dir, std::size_t x,
                      const SolverSettings& s = {});

/// On-disk corrector store keyed by realization, order, variant, indices and lambda:
///   root/run_id/m/{order}_{variant}_{indices}_{lambda}.field (+ .json)
class CorrectorCache {
 public:
  CorrectorCache(std::filesystem::path root, std::string run_id);

  std::filesystem::path path(std::uint64_t m, int order, const std::string& variant,
                             const std::string& indices, double lambda) const;
  std::optional<Corrector> load(std::uint64_t m, int order, const std::string& variant,
                                const std::string& indices, double lambda,
                                const Torus& t) const;
  void store(std::uint64_t m, const std::string& variant, const std::string& indices,
             const Corrector& c) const;
  /// Loads or builds and stores.
  Corrector get(std::uint64_t m, int order, const std::string& variant,
                const std::string& indices, double lambda, const Torus& t,
                const std::function<Corrector()>& build) const;

 private:
  std::filesystem::path root_;
  std::string run_id_;
};

/// Cache root from CORRECTOR_LAB_CACHE, or empty when unset.
std::optional<std::filesystem::path> cache_root_from_env();

}  // namespace clab
