#include <iostream>

#include "CLI11.hpp"
#include "clab/acceptance.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria, one line per criterion"};
  std::string suite = "fast";
  bool heavy = false, verbose = false, quiet = false, exhaustive = false;
  int only = 0;
  app.add_option("--suite", suite, "fast, rates-d3 or heavy-d5")
      ->check(CLI::IsMember({"fast", "rates-d3", "heavy-d5"}));
  app.add_option("--criterion", only, "Run a single criterion");
  app.add_flag("--enable-heavy", heavy, "Run heavy-d5 criteria");
  app.add_flag("-v,--verbose", verbose, "Print every check");
  app.add_flag("--exhaustive", exhaustive, "Run the rate scan even when too few rungs fit in memory");
  app.add_flag("-q,--quiet", quiet, "No progress output");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  clab::acceptance::SuiteOptions o;
  o.enable_heavy = heavy;
  o.exhaustive = exhaustive;
  if (only) o.only = only;
  if (!quiet) o.log = [](const std::string& s) { std::cerr << s << "\n"; };
  const auto r = clab::acceptance::run_suite(suite, o);
  clab::acceptance::print_table(std::cout, r, verbose);
  return clab::acceptance::suite_exit_code(r);
}
