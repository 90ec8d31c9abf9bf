#pragma once

// Experiment configuration: a versioned YAML file. Unknown keys and invalid
// values are errors that carry the offending line.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "clab/ensemble.hpp"
#include "clab/solver.hpp"

namespace clab {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind {
  Correctors,
  Moments,
  GreenDecay,
  Effective,
  TwoscaleRates,
  BiasIdentities,
  Sensitivity,
  Order3
};

std::string kind_name(ExperimentKind k);

struct ExperimentConfig {
  int version = 1;
  ExperimentKind kind = ExperimentKind::Effective;
  Ensemble ensemble;

  int d = 3;
  std::vector<int> L{16};
  double side = 8.0;

  SolverSettings solver;
  int threads = 1;

  int M = 10;
  std::vector<int> p{2};
  std::vector<double> lambda{1e-2};
  std::vector<double> eps{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  std::vector<int> lags;
  std::vector<double> radii;
  /// Corrector order for correctors / moments.
  int order = 1;
  /// Expansion orders for twoscale-rates.
  std::vector<int> orders{0, 1};
  int pairs = 10;
  double h = 1e-5;

  double alpha = 1.0;
  std::optional<double> width;
  /// Fixed abar; when absent it is estimated by a pre-run.
  std::optional<double> abar;
  int prerun_M = 20;
  int prerun_L = 16;

  bool export_fields = false;
  std::string output = "out";

  /// Dimensional-gate warnings computed while parsing.
  std::vector<std::string> warnings;
  /// Raw file contents (hashed into the manifest).
  std::string text;
};

ExperimentConfig parse_config_text(const std::string& text, const std::string& name = "config");
ExperimentConfig load_config(const std::string& path);

/// FNV-1a 64-bit of the bytes, as 16 hex digits.
std::string content_hash(const std::string& bytes);

}  // namespace clab
