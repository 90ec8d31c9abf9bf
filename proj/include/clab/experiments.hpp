#pragma once

// Experiment runner behind `corrector-lab run`: executes one configured
// experiment, collects CSV rows, per-cell records and statuses, and writes
// the artifacts plus a manifest into the output directory.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "clab/config.hpp"
#include "json.hpp"

namespace clab {

/// One line of results.csv (schema version 1):
///   quantity,d,L,param,p,M,mean,stderr
struct CsvRow {
  std::string quantity;
  int d = 0;
  int L = 0;
  double param = 0.0;
  int p = 0;
  int M = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
};

struct CellStatus {
  std::string id;
  bool ok = true;
  std::string error;
  double seconds = 0.0;
  int cg_restarts = 0;
};

struct RunResult {
  std::vector<CsvRow> rows;
  nlohmann::json summary = nlohmann::json::object();
  nlohmann::json cells = nlohmann::json::array();
  std::vector<CellStatus> statuses;
  std::vector<std::string> warnings;
  /// Extra data files (relative to the output directory) written during the run.
  std::vector<std::string> files;

  /// 0 when every cell succeeded, 2 otherwise.
  int exit_code() const;
};

using Logger = std::function<void(const std::string&)>;

RunResult run_experiment(const ExperimentConfig& c, const Logger& log = {});

std::string csv_text(const std::vector<CsvRow>& rows);

/// results.csv, summary.json, cells.json and manifest.json.
void write_artifacts(const ExperimentConfig& c, const RunResult& r);

/// Parses, runs and writes; returns the process exit status (1 on config errors).
int run_config_file(const std::string& path, const Logger& log, std::ostream& err);

/// Version string baked in at configure time.
std::string code_version();

}  // namespace clab
