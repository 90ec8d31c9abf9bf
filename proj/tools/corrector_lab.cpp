#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "clab/acceptance.hpp"
#include "clab/experiments.hpp"
#include "clab/field_io.hpp"

namespace {

const char* kind_label(clab::FieldKind k) {
  switch (k) {
    case clab::FieldKind::Site: return "site";
    case clab::FieldKind::Vector: return "vector";
    case clab::FieldKind::Edge: return "edge";
  }
  return "?";
}

std::string export_csv(const clab::FieldFile& f) {
  const clab::Torus t = f.torus();
  const int comps = f.kind == clab::FieldKind::Site ? 1 : f.d;
  std::ostringstream os;
  for (int i = 0; i < f.d; ++i) os << 'x' << i + 1 << ',';
  if (comps > 1) os << "dir,";
  os << "value\n";
  char buf[32];
  // vector and edge payloads are component-major
  for (int c = 0; c < comps; ++c) {
    for (std::size_t x = 0; x < t.sites(); ++x) {
      const clab::Coord xc = t.coords(x);
      for (int i = 0; i < f.d; ++i) os << xc[i] << ',';
      if (comps > 1) os << c + 1 << ',';
      std::snprintf(buf, sizeof buf, "%.17g", f.values[c * t.sites() + x]);
      os << buf << '\n';
    }
  }
  return os.str();
}

int export_field(const std::string& path, const std::string& format, const std::string& out) {
  const clab::FieldFile f = clab::read_field(path);
  std::string text;
  if (format == "csv") {
    text = export_csv(f);
  } else {
    double lo = 0, hi = 0, sum = 0;
    if (!f.values.empty()) {
      lo = *std::min_element(f.values.begin(), f.values.end());
      hi = *std::max_element(f.values.begin(), f.values.end());
      for (double v : f.values) sum += v;
    }
    nlohmann::json j{{"kind", kind_label(f.kind)}, {"d", f.d}, {"L", f.L},
                     {"count", f.values.size()}, {"min", lo}, {"max", hi},
                     {"mean", f.values.empty() ? 0.0 : sum / f.values.size()}, {"meta", f.meta}};
    text = j.dump(2) + "\n";
  }
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + out);
    os << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"corrector-lab: stochastic homogenization corrector experiments"};
  app.set_version_flag("--version", clab::code_version());
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "No progress output on stderr");

  std::string config;
  auto* run = app.add_subcommand("run", "Run the experiment described by a YAML config");
  run->add_option("config", config, "Config file")->required()->check(CLI::ExistingFile);

  std::string suite;
  bool heavy = false, verbose = false, exhaustive = false;
  int only = 0;
  auto* verify = app.add_subcommand("verify", "Run an acceptance suite");
  verify->add_option("suite", suite, "fast, rates-d3 or heavy-d5")
      ->required()
      ->check(CLI::IsMember({"fast", "rates-d3", "heavy-d5"}));
  verify->add_flag("--enable-heavy", heavy, "Run heavy-d5 criteria instead of skipping them");
  verify->add_option("--criterion", only, "Run a single criterion of the suite");
  verify->add_flag("-v,--verbose", verbose, "Print every check");
  verify->add_flag("--exhaustive", exhaustive, "Run the rate scan even when too few rungs fit in memory");

  std::string field, format = "json", out;
  auto* exp = app.add_subcommand("export-field", "Describe or convert a binary field file");
  exp->add_option("path", field, "Field file")->required()->check(CLI::ExistingFile);
  exp->add_option("--format", format, "json (header and summary) or csv (one row per value)")
      ->check(CLI::IsMember({"json", "csv"}));
  exp->add_option("-o,--out", out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  clab::Logger log;
  if (!quiet) log = [](const std::string& s) { std::cerr << s << "\n"; };

  try {
    if (*run) return clab::run_config_file(config, log, std::cerr);
    if (*verify) {
      clab::acceptance::SuiteOptions o;
      o.enable_heavy = heavy;
      o.exhaustive = exhaustive;
      if (only) o.only = only;
      o.log = log;
      const auto r = clab::acceptance::run_suite(suite, o);
      clab::acceptance::print_table(std::cout, r, verbose);
      return clab::acceptance::suite_exit_code(r);
    }
    if (*exp) return export_field(field, format, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
