#pragma once

// Monte-Carlo reducers over realizations: moments with jackknife errors, the
// eps-weighted L2 norm, correlation decay, sublinear growth, Green-function
// decay scans and log-log rate fits.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clab/correctors.hpp"
#include "clab/ensemble.hpp"
#include "clab/lattice.hpp"
#include "clab/solver.hpp"

namespace clab {

struct MomentEstimate {
  std::string quantity;
  int p = 2;
  double mean = 0.0;
  double stderr_ = 0.0;
  int M = 0;
  int d = 0;
  int L = 0;
  double param = 0.0;
};

struct RateFit {
  std::vector<double> x;
  std::vector<double> y;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double half_width = 0.0;
  bool degenerate = false;
};

struct NormEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  int M = 0;
};

/// Sample mean and standard error (sample std / sqrt(M)).
MomentEstimate mean_estimate(const std::vector<double>& samples, std::string quantity = "",
                             int p = 1);

/// Jackknife standard error of `estimator` applied to per-realization values.
double jackknife_se(const std::vector<double>& samples,
                    const std::function<double(const std::vector<double>&)>& estimator);

/// (eps^d sum_x <f^2>)^{1/2} with jackknife error over realizations.
NormEstimate norm_2eps(const std::vector<SiteField>& samples, double eps);
/// Same estimator from per-realization energies eps^d sum_x f_m(x)^2.
NormEstimate norm_2eps_from_energies(const std::vector<double>& energies);
double eps_energy(const SiteField& f, double eps);

/// Least squares of log y on log x with a residual-bootstrap 95% half-width.
/// Requires at least three strictly monotone abscissas and positive ordinates.
RateFit rate_regression(const std::vector<double>& x, const std::vector<double>& y,
                        int bootstrap = 2000, std::uint64_t seed = 12345);

struct MomentScanCell {
  double lambda = 0.0;
  int m = 0;
  std::string error;
};

struct MomentScan {
  std::vector<MomentEstimate> estimates;
  std::vector<MomentScanCell> failures;
};

/// <|psi^lambda(0)|^p> and <|grad psi^lambda(0)|^p> (Euclidean norm of the
/// gradient vector at the origin) for each lambda and p. A failing (lambda, m)
/// cell is dropped from the estimate and listed in `failures`.
MomentScan moment_scan(const std::function<Corrector(double lambda, int m)>& build,
                       const std::vector<int>& ps, const std::vector<double>& lambdas, int M,
                       const std::string& label = "psi");

enum class CorrelationMode { Spatial, ReferenceSite };

struct CorrelationLag {
  int lag = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  bool dropped = false;
};

struct CorrelationReport {
  std::vector<CorrelationLag> lags;
  std::optional<RateFit> fit;
  std::vector<std::string> warnings;
};

/// <psi(0) psi(r e_i)> averaged over i in `axes`. Spatial mode
/// averages over all base points of each realization; reference-site mode
/// uses the origin only. Lags whose mean is within 2 standard errors of 0 are
/// dropped from the fit. Lags must not exceed L/4.
CorrelationReport correlation_decay(const std::vector<SiteField>& samples,
                                    const std::vector<int>& lags, const std::vector<int>& axes,
                                    CorrelationMode mode = CorrelationMode::Spatial);

struct SublinearityReport {
  std::vector<double> eps;
  std::vector<MomentEstimate> scaled;
  double max_growth_ratio = 0.0;
  bool monotone = false;
  bool halved = false;
  bool sublinear = false;
  std::optional<RateFit> fit;
};

/// <|eps psi(x/eps)|^2> at the physical point x across the eps ladder, for
/// anchored fields psi(0) = 0 supplied by `field(rung, m)`.
SublinearityReport sublinearity_check(const std::vector<double>& eps,
                                      const std::vector<double>& x_phys, int M,
                                      const std::function<SiteField(int rung, int m)>& field);

struct GreenDecayReport {
  std::vector<double> radii;
  std::vector<MomentEstimate> grad;
  std::vector<MomentEstimate> hess;
  RateFit grad_fit;
  RateFit hess_fit;
  std::vector<std::string> warnings;
};

/// p-norms over the ensemble of shell averages of the dipole Green column v
/// for the edge (0, e_1): |v(y)| (first derivative) and |grad v(y)| (mixed
/// second derivative) against |y|.
GreenDecayReport green_decay_scan(const Torus& t, const Ensemble& ens, double lambda, int p,
                                  const std::vector<double>& radii, int M,
                                  const SolverSettings& s = {});
/// Same scan for a deterministic coefficient field (M = 1).
GreenDecayReport green_decay_scan(const EdgeField& a, double lambda, int p,
                                  const std::vector<double>& radii, const SolverSettings& s = {});

/// Two-sided normal quantile for family-wise level alpha over n tests.
double bonferroni_z(int n, double alpha = 0.0027);
/// Same with Student-t quantiles on `dof` degrees of freedom.
double bonferroni_t(int n, int dof, double alpha = 0.0027);

}  // namespace clab
