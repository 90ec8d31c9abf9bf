#pragma once

// Acceptance suites: fast (exact identities and closed-form oracles),
// rates-d3 (Monte-Carlo moment, decay, rate and bias checks) and heavy-d5
// (off unless enabled).

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace clab::acceptance {

struct Check {
  std::string claim;
  double measured = 0.0;
  std::string tolerance;
  bool pass = false;
  /// Reported but does not decide the criterion.
  bool informational = false;
  std::string evidence;
};

struct CriterionResult {
  int id = 0;
  std::string title;
  std::vector<Check> checks;
  bool skipped = false;
  std::string note;
  double seconds = 0.0;

  bool pass() const;
};

struct SuiteOptions {
  bool enable_heavy = false;
  /// Run the rate scan even when too few rungs fit in memory for a fit.
  bool exhaustive = false;
  std::optional<int> only;
  std::function<void(const std::string&)> log;
};

const std::vector<std::string>& suite_names();
/// Criterion ids of a suite; throws std::invalid_argument on an unknown name.
std::vector<int> suite_criteria(const std::string& suite);

CriterionResult run_criterion(int id, const SuiteOptions& o = {});
std::vector<CriterionResult> run_suite(const std::string& suite, const SuiteOptions& o = {});

/// One line per criterion; with `verbose` also one line per check.
void print_table(std::ostream& os, const std::vector<CriterionResult>& r, bool verbose);
/// 0 when every non-skipped criterion passes.
int suite_exit_code(const std::vector<CriterionResult>& r);

}  // namespace clab::acceptance
