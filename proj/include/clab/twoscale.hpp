#pragma once

// Discrete two-scale expansion on the eps-grid: macroscopic problem, the
// homogenized and heterogeneous solves, u1 / u2 / order-3 assembly with the
// shifted macroscopic arguments, the source-term ledger of the remainder
// equation, expansion-error scans and the bias identities.
//
// The macroscopic grid eps Z^d / S Z^d and the microscopic torus Z^d / (S/eps) Z^d
// share their site set, so a field f(x, x/eps) is a single SiteField.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clab/correctors.hpp"
#include "clab/ensemble.hpp"
#include "clab/lattice.hpp"
#include "clab/solver.hpp"
#include "clab/statistics.hpp"

namespace clab {

class TwoScaleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MacroProblem {
  double alpha = 1.0;
  double side = 8.0;
  double amplitude = 1.0;
  /// Standard deviation of the Gaussian bump; S/16 by default.
  double width = 0.5;
  double abar = 1.0;
  std::vector<double> eps_ladder{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};

  static MacroProblem standard(double abar, double side = 8.0);

  /// S / eps, which must be an integer >= 2.
  int sites_per_side(double eps) const;
  Torus grid(int d, double eps) const;
  /// f(x) = amplitude * exp(-|x - c|^2 / (2 width^2)), c the torus center,
  /// periodic distance.
  SiteField source(const Torus& grid) const;
  /// f(c + r) / amplitude at r = S/4.
  double tail_at_quarter() const;
  /// Throws TwoScaleError on invalid values; returns soft warnings.
  std::vector<std::string> validate() const;
};

struct EffectiveCoefficient {
  int d = 0;
  int M = 0;
  double scalar = 0.0;
  double scalar_se = 0.0;
  /// Row-major d x d.
  std::vector<double> matrix;
  std::vector<double> matrix_se;
  /// Diagonal average per realization.
  std::vector<double> per_realization;
  std::vector<std::string> failures;
};

/// Torus average of a_i (1_{i=j} + grad_i phi_j), row-major.
std::vector<double> homogenized_matrix(const EdgeField& a, const std::vector<Corrector>& phi);

/// Realizations m_offset .. m_offset + M - 1.
EffectiveCoefficient effective_coefficient(const Ensemble& ens, int d, int L, int M,
                                           const SolverSettings& s = {},
                                           std::uint64_t m_offset = 0);

/// (alpha + div*_eps a(x/eps) grad_eps) u = f on the grid with S/eps sites.
Solution solve_hetero(const EdgeField& a, const MacroProblem& p, double eps,
                      const SolverSettings& s = {});
/// (alpha + abar div*_eps grad_eps) u0 = f by the Fourier solver.
SiteField solve_homog(const MacroProblem& p, const Torus& grid);
/// Continuum (alpha - abar Laplacian)^{-1} f evaluated spectrally on the grid.
SiteField continuum_homog(const MacroProblem& p, const Torus& grid);

/// sum_j grad_{eps,j} u0(x - eps e_j) phi_j(x/eps).
SiteField build_u1(const SiteField& u0, const std::vector<Corrector>& phi, double eps);
/// sum_j grad_{eps,j} u0(x) phi_j(x/eps).
SiteField build_u1_unshifted(const SiteField& u0, const std::vector<Corrector>& phi, double eps);
/// sum_ij F_ij psi_ij + Ft_ij psit_ij with
///   F_ij  = div*_{eps,i} grad_{eps,j} u0(x - eps e_j + eps e_i),
///   Ft_ij = grad_{eps,i} grad_{eps,j} u0(x - eps e_j - eps e_i).
SiteField build_u2(const SiteField& u0, const SecondCorrectors& psi, double eps);

/// The fields F_V in the order used by build_u2: V = (i, j) plain for
/// V < d^2, then tilde.
std::vector<SiteField> second_order_coefficients(const SiteField& u0, double eps);

enum class Group { I, II, III, IV, Torus, Cancelling, Residual };
std::string group_name(Group g);

struct LedgerTerm {
  std::string name;
  Group group;
  SiteField field;
};

/// Sources of the remainder equation on one realization. The expansion
/// satisfies, pointwise,
///   (alpha + div*_eps a grad_eps)(u0 + eps u1 + eps^2 u2) - f = sum of all terms.
struct SourceTermLedger {
  double eps = 0.0;
  double alpha = 0.0;
  std::vector<LedgerTerm> terms;

  const LedgerTerm& term(const std::string& name) const;
  bool has(const std::string& name) const;
  /// J3 and K3 are stored as fluctuation and mean parts; these names return
  /// their sum.
  SiteField combined(const std::string& name) const;
  SiteField total(const std::vector<std::string>& drop = {}) const;
  /// max |J1 + J2 + K4|
  double cancellation_residual() const;
  /// Single-realization (eps^d sum |W_g|^2)^{1/2} of the summed sources per group.
  std::vector<std::pair<Group, double>> group_budgets() const;
};

struct ExpansionBundle {
  double eps = 0.0;
  double abar = 0.0;
  SiteField f;
  SiteField u0;
  SiteField u1;
  SiteField u1_tilde;
  SiteField u2;
  std::optional<SiteField> u_eps;
  std::optional<SiteField> z;
  std::vector<Corrector> phi;
  std::optional<SecondCorrectors> psi2;
  /// Torus averages <a_i (1_{i=j} + grad_i phi_j)>.
  std::vector<double> A;
  SolveReport hetero_report;
};

struct BundleOptions {
  bool second_order = true;
  bool solve_hetero = true;
  SolverSettings corrector{1e-13, 40000, true, true};
  SolverSettings macro{1e-12, 40000, true, true};
};

/// Correctors at lambda = 0 on the realization's torus, u0 with the
/// problem's abar, u1, u1_tilde, u2 and (optionally) u_eps and z.
ExpansionBundle build_bundle(const EdgeField& a, const MacroProblem& p, double eps,
                             const BundleOptions& o = {});

SourceTermLedger build_ledger(const EdgeField& a, const ExpansionBundle& b, double alpha);

struct RemainderCheck {
  /// max |(alpha + L_a)(u0 + eps u1 + eps^2 u2) - f - ledger| / max |f|
  double relative_residual = 0.0;
  double max_residual = 0.0;
  /// max |(alpha + L_a) z + (ledger without residual terms)| / max |f| when u_eps is present.
  std::optional<double> z_equation_residual;
  std::vector<std::string> dropped;
};

RemainderCheck remainder_identity_check(const EdgeField& a, const ExpansionBundle& b,
                                        const SourceTermLedger& ledger, double alpha,
                                        const std::vector<std::string>& drop = {});

// ---------------------------------------------------------------------------
// Order three.

/// One entry of the order-3 list: the macroscopic coefficient G_U and the
/// microscopic field U with torus mean 0.
struct ThirdOrderSource {
  std::string label;
  SiteField G;
  SiteField U;
};

/// The G_U alone, in the order of third_order_sources.
std::vector<SiteField> third_order_coefficients(const ExpansionBundle& b, double alpha);
/// U ranges over phi_j, a_i phi_j - <a_i phi_j>, div*_i(a_i psi_V) and
/// a_i grad_i psi_V - <a_i grad_i psi_V> (torus means).
std::vector<ThirdOrderSource> third_order_sources(const EdgeField& a, const ExpansionBundle& b,
                                                  double alpha);

/// Ensemble constants entering v1 and v2, estimated on a separate pre-run.
struct CoefficientTable {
  int d = 0;
  int M = 0;
  /// <a_i phi_j>, [i d + j]
  std::vector<double> a_phi;
  /// <a_k grad_k psi_V>, [V d + k], V over the 2 d^2 second correctors
  std::vector<double> a_grad_psi;
  /// <a_k psi_V>, [V d + k]
  std::vector<double> a_psi;
  /// <a_k grad_k psi3_U>, [U d + k]; empty when psi3 was not built
  std::vector<double> a_grad_psi3;
};

/// Torus averages on one realization.
CoefficientTable coefficient_table(const EdgeField& a, const std::vector<Corrector>& phi,
                                   const SecondCorrectors& psi,
                                   const std::vector<Corrector>* psi3 = nullptr);
/// Mean of per-realization tables.
CoefficientTable average_tables(const std::vector<CoefficientTable>& tables);
CoefficientTable coefficient_prerun(const Ensemble& ens, int d, int L, int M, double abar,
                                    bool with_psi3, const SolverSettings& s = {},
                                    std::uint64_t m_offset = 0);

struct Order3Pieces {
  std::vector<Corrector> psi3;
  SiteField u3;
  SiteField v1;
  SiteField v11;
  SiteField v2;
  /// max |eps sum_U G_U div* a grad psi3_U - eps sum_U G_U U|
  double l4_residual = 0.0;
  /// Same order-3 identity as the remainder check, relative to max |f|.
  double identity_residual = 0.0;
};

/// div* a grad psi3_U = U with mean-zero gauge for every U.
std::vector<Corrector> third_correctors(const EdgeField& a, const std::vector<ThirdOrderSource>& src,
                                        const SolverSettings& s = {});

/// (alpha + abar L) v1 = -[sum_ij grad*_{eps,i} grad_{eps,i} grad_{eps,j} u0(x - eps e_j) c_ij
///                         + sum_V sum_k grad*_{eps,k} F_V(x + eps e_k) c_Vk]
SiteField bias_v1(const ExpansionBundle& b, const CoefficientTable& t, double alpha);
/// (alpha + abar L) v2 = -[sum_V sum_k grad*_{eps,k} grad_{eps,k} F_V <a_k psi_V>
///                         + sum_U sum_k grad*_{eps,k} G_U(x + eps e_k) <a_k grad_k psi3_U>]
SiteField bias_v2(const ExpansionBundle& b, const std::vector<SiteField>& G,
                  const CoefficientTable& t, double alpha);

Order3Pieces order3_pieces(const EdgeField& a, const ExpansionBundle& b, double alpha,
                           const CoefficientTable& table, const SolverSettings& s = {});

// ---------------------------------------------------------------------------
// Monte-Carlo scans.

struct ScanSettings {
  int M = 50;
  /// Subset of {0, 1, 2}.
  std::vector<int> orders{0, 1};
  SolverSettings solver{1e-10, 40000, true, true};
  /// Bytes allowed per cell; 0 reads MemAvailable.
  std::size_t memory_limit = 0;
  /// Required when order 2 is requested.
  const CoefficientTable* table = nullptr;
  /// Remainder identity per cell on grids with at most this many sites.
  std::size_t identity_check_sites = std::size_t{1} << 18;
  std::function<void(const std::string&)> log;
};

struct RungResult {
  double eps = 0.0;
  int L = 0;
  bool feasible = true;
  std::string note;
  NormEstimate e0;
  NormEstimate e1;
  NormEstimate e1_tilde;
  NormEstimate u1_minus_u1_tilde;
  NormEstimate eps2_u2;
  NormEstimate e2;
  NormEstimate v1;
  /// Sites where |<u1>| exceeds the Bonferroni threshold times its standard error.
  int u1_mean_violations = 0;
  double u1_mean_max_z = 0.0;
  double u1_mean_threshold = 0.0;
  /// Largest relative residual of the remainder identity over the cells.
  double max_identity_residual = 0.0;
  int failures = 0;
  /// Mean group budgets over realizations.
  std::vector<std::pair<Group, double>> budgets;
};

/// One (realization, eps) cell: per-realization norms (eps^d sum |.|^2)^{1/2}.
struct ScanCell {
  int m = 0;
  double eps = 0.0;
  int L = 0;
  bool ok = false;
  std::string error;
  double e0 = 0.0;
  double e1 = 0.0;
  double e1_tilde = 0.0;
  double eps2_u2 = 0.0;
  double e2 = 0.0;
  std::optional<double> identity_residual;
  std::vector<std::pair<Group, double>> budgets;
  int hetero_iterations = 0;
  double seconds = 0.0;
};

struct ExpansionScan {
  std::vector<RungResult> rungs;
  std::vector<ScanCell> cells;
  std::optional<RateFit> fit_e0;
  std::optional<RateFit> fit_e1;
  std::optional<RateFit> fit_e1_tilde;
  std::optional<RateFit> fit_eps2_u2;
  std::optional<RateFit> fit_e2;
  std::vector<std::string> warnings;
};

/// Bytes needed by one (realization, eps) cell for the requested orders.
std::size_t estimate_cell_bytes(int d, int L, int max_order);
/// MemAvailable from /proc/meminfo, or 0 when unknown.
std::size_t available_memory_bytes();

/// Coupled seeds: realization m uses the same per-edge conductances on every
/// rung (extend_field from the coarsest torus).
ExpansionScan expansion_error_scan(const Ensemble& ens, int d, const MacroProblem& p,
                                   const ScanSettings& s);

/// Fit of log y against log x, or a degenerate marker when every y is at or
/// below `floor`.
RateFit fit_or_degenerate(const std::vector<double>& x, const std::vector<double>& y,
                          double floor);

struct BiasCheck {
  std::string identity;
  int k = 0;
  int i = 0;
  int j = 0;
  double lhs = 0.0;
  double lhs_se = 0.0;
  double rhs = 0.0;
  double rhs_se = 0.0;
  double z = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct BiasReport {
  int d = 0;
  int L = 0;
  int M = 0;
  std::vector<BiasCheck> checks;
  /// Largest per-realization |lhs - rhs| of the spatial-average identities.
  double max_torus_gap = 0.0;
  int failures = 0;
  bool all_pass() const;
};

/// Per-realization torus averages entering the three identities.
struct BiasSample {
  int d = 0;
  /// [k d^2 + i d + j]
  std::vector<double> grad_psi;     // <a_k grad_k psi_ij>
  std::vector<double> grad_psi_rhs; // 1_{i=j} <phi_k a_i> + <phi_k a_i grad_i phi_j>
  std::vector<double> grad_psit;    // <a_k grad_k psit_ij>
  std::vector<double> grad_psit_rhs;// <grad_i phi_k a_i phi_j>
  std::vector<double> a_phi;        // <a_i phi_j>, [i d + j]
};

BiasSample bias_sample(const EdgeField& a, const std::vector<Corrector>& phi,
                       const SecondCorrectors& psi);

BiasReport bias_identities(const Ensemble& ens, int d, int L, int M, const SolverSettings& s = {});
BiasReport bias_report(const std::vector<BiasSample>& samples, int L);

}  // namespace clab
