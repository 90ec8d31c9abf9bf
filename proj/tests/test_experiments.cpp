#include <filesystem>
#include <fstream>
#include <sstream>

#include "clab/experiments.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace clab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("clab_exp_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path cfg = dir / "config.yaml";
  std::ofstream(cfg) << body << "output: " << (dir / "out").string() << "\n";
  return cfg;
}

int run(const fs::path& cfg, std::string* err = nullptr) {
  std::ostringstream es;
  const int code = run_config_file(cfg.string(), {}, es);
  if (err) *err = es.str();
  return code;
}

}  // namespace

TEST_CASE("effective, d=1: abar within 3 stderr of the harmonic mean") {
  const fs::path dir = scratch("effective");
  const fs::path cfg = write_config(dir, R"(version: 1
experiment: effective
ensemble: {law: uniform, lo: 0.25, hi: 1.0, delta: 0.2, seed: 5}
geometry: {d: 1, L: [1024]}
solver: {tol: 1.0e-12}
statistics: {M: 50}
)");
  REQUIRE(run(cfg) == 0);
  const auto s = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
  const auto& e = s["effective"][0];
  const double abar = e["abar"], se = e["stderr"], hm = e["harmonic_mean"];
  CHECK(se > 0.0);
  CHECK(std::abs(abar - hm) <= 3 * se);
  const std::string csv = slurp(dir / "out" / "results.csv");
  CHECK(csv.rfind("quantity,d,L,param,p,M,mean,stderr\n", 0) == 0);
  CHECK(csv.find("\nabar,1,1024,0,1,50,") != std::string::npos);

  const auto m = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m["exit_code"] == 0);
  CHECK(m["config_hash"].get<std::string>().size() == 16);
  CHECK(m["files"].size() == 3);
  for (const auto& f : m["files"]) CHECK(fs::exists(dir / "out" / f.get<std::string>()));
}

TEST_CASE("twoscale-rates with a constant law: tiny errors, degenerate slopes") {
  const fs::path dir = scratch("constant");
  const fs::path cfg = write_config(dir, R"(version: 1
experiment: twoscale-rates
ensemble: {law: constant, value: 0.6}
geometry: {d: 2, side: 4}
statistics: {M: 2, eps: [0.5, 0.25, 0.125], orders: [0, 1]}
macro: {abar: 0.6, width: 0.5}
solver: {tol: 1.0e-12}
)");
  REQUIRE(run(cfg) == 0);
  const auto s = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
  for (const auto& r : s["rungs"]) CHECK(r["max_identity_residual"].get<double>() <= 1e-8);
  const auto cells = nlohmann::json::parse(slurp(dir / "out" / "cells.json"));
  for (const auto& c : cells) {
    CHECK(c["norm_u_eps_minus_u0"].get<double>() <= 1e-8);
    CHECK(c["norm_minus_u1"].get<double>() <= 1e-8);
  }
  REQUIRE(s.contains("fits"));
  for (const auto& [k, f] : s["fits"].items()) CHECK(f["degenerate"] == true);
  const std::string csv = slurp(dir / "out" / "results.csv");
  CHECK(csv.find("slope_norm_u_eps_minus_u0,2,0,0,0,2,nan,nan") != std::string::npos);
}

TEST_CASE("rerun gives a byte-identical CSV") {
  const fs::path dir = scratch("rerun");
  const fs::path cfg = write_config(dir, R"(version: 1
experiment: moments
ensemble: {law: two-point, seed: 9}
geometry: {d: 2, L: [16]}
statistics: {M: 6, p: [2, 4], lambda: [0.1, 0.01], lags: [1, 2, 3, 4]}
)");
  REQUIRE(run(cfg) == 0);
  const std::string first = slurp(dir / "out" / "results.csv");
  REQUIRE(run(cfg) == 0);
  CHECK(slurp(dir / "out" / "results.csv") == first);
  CHECK(first.find("phi1_correlation") != std::string::npos);
}

TEST_CASE("partial failure exits 2 and the manifest lists the failed cells") {
  const fs::path dir = scratch("partial");
  const fs::path cfg = write_config(dir, R"(version: 1
experiment: correctors
ensemble: {law: uniform, seed: 1}
geometry: {d: 2, L: [16]}
solver: {max_iter: 1}
statistics: {M: 2, lambda: [0.01]}
)");
  std::string err;
  CHECK(run(cfg, &err) == 2);
  CHECK(err.find("failed") != std::string::npos);
  const auto m = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m["exit_code"] == 2);
  int failed = 0;
  for (const auto& c : m["cells"]) failed += c["status"] == "failed" ? 1 : 0;
  CHECK(failed == 2);
}

TEST_CASE("config errors exit 1 without artifacts") {
  const fs::path dir = scratch("bad");
  const fs::path cfg = write_config(dir, "version: 1\nexperiment: effective\ngeometry: {d: 3, Lx: 4}\n");
  std::string err;
  CHECK(run(cfg, &err) == 1);
  CHECK(err.find("unknown key 'Lx'") != std::string::npos);
  CHECK(!fs::exists(dir / "out" / "manifest.json"));
}

TEST_CASE("correctors export fields referenced by the manifest") {
  const fs::path dir = scratch("export");
  const fs::path cfg = write_config(dir, R"(version: 1
experiment: correctors
ensemble: {law: uniform, seed: 3}
geometry: {d: 2, L: [8]}
statistics: {M: 2, lambda: [0.1], order: 2}
export_fields: true
)");
  REQUIRE(run(cfg) == 0);
  const auto m = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m["files"].size() == 7);
  for (const auto& f : m["files"]) CHECK(fs::exists(dir / "out" / f.get<std::string>()));
  CHECK(!m["warnings"].empty());
}

TEST_CASE("csv formatting") {
  const std::string t = csv_text({{"q", 3, 16, 0.001, 2, 10, 1.0 / 3.0, NAN}});
  CHECK(t == "quantity,d,L,param,p,M,mean,stderr\nq,3,16,0.001,2,10,0.33333333333333331,nan\n");
}
