#pragma once

// I.i.d. conductance ensembles sampled with a counter-based generator keyed
// per edge, so that the value on an edge depends only on
// (master seed, realization, edge coordinates, direction).

#include <array>
#include <cstdint>
#include <functional>
#include <string>

#include "clab/lattice.hpp"

namespace clab {

class EnsembleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Philox4x32 with 10 rounds.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

struct ConductanceLaw {
  enum class Kind { Uniform, TwoPointSmoothed, BetaRescaled, Constant };

  Kind kind = Kind::Uniform;
  double delta = 0.25;
  // Uniform: support (lo, hi).
  double lo = 0.25;
  double hi = 1.0;
  // TwoPointSmoothed: with probability `weight` uniform on a window of
  // `width` around `p1`, otherwise around `p2`.
  double p1 = 0.3;
  double p2 = 0.9;
  double weight = 0.5;
  double width = 0.05;
  // BetaRescaled: delta + (1 - delta) * Beta(alpha, beta).
  double alpha = 2.0;
  double beta = 2.0;
  // Constant debug law.
  double value = 1.0;

  static ConductanceLaw uniform(double lo, double hi, double delta);
  static ConductanceLaw two_point_smoothed(double p1, double p2, double weight, double width,
                                           double delta);
  static ConductanceLaw beta_rescaled(double alpha, double beta, double delta);
  static ConductanceLaw constant(double value, double delta = 0.0);

  /// Throws EnsembleError unless the support lies in (delta, 1].
  void validate() const;
  /// Inverse of the law's CDF composed with two independent uniforms
  /// (the second selects the mixture component where needed).
  double sample(double u1, double u2) const;
  double arithmetic_mean() const;
  /// 1 / <1/omega>.
  double harmonic_mean() const;
  double variance() const;
  std::string describe() const;
};

struct SeedPlan {
  std::uint64_t master = 20240601;
};

struct Ensemble {
  ConductanceLaw law;
  SeedPlan seeds;
};

/// Two open-interval uniforms for edge (x, x + e_dir) in realization m.
std::array<double, 2> edge_uniforms(const SeedPlan& plan, std::uint64_t m, const Coord& x, int dir);

EdgeField sample_field(const Torus& t, const Ensemble& ens, std::uint64_t m);

/// Samples the L'-torus field for the same realization and checks that the
/// edges with coordinates in [0, L)^d coincide with `base`.
EdgeField extend_field(const EdgeField& base, int L_new, const Ensemble& ens, std::uint64_t m);

/// Central difference of a field-valued functional in the conductance of
/// the edge (site, site + e_dir).
SiteField vertical_difference(const std::function<SiteField(const EdgeField&)>& fn,
                              const EdgeField& a, int dir, std::size_t site, double h);

}  // namespace clab
