#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "clab/ensemble.hpp"
#include "clab/field_io.hpp"
#include "doctest.h"

using namespace clab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("clab_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("site, vector and edge fields round trip") {
  const fs::path dir = scratch("roundtrip");
  Torus t(3, 4, 2.0);
  SiteField f(t);
  std::mt19937_64 g(1);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::uniform_real_distribution<>(-1, 1)(g);
  write_field(dir / "f.field", f, {{"label", "phi_1"}});
  FieldFile rf = read_field(dir / "f.field");
  CHECK(rf.kind == FieldKind::Site);
  CHECK(rf.d == 3);
  CHECK(rf.L == 4);
  CHECK(rf.meta["label"] == "phi_1");
  CHECK(rf.meta["side"].get<double>() == 2.0);
  SiteField back = rf.site_field();
  CHECK(max_abs_diff(back, f) == 0.0);
  CHECK(back.torus() == t);

  VectorField v = grad(f);
  write_field(dir / "v.field", v);
  CHECK(max_abs_diff(read_field(dir / "v.field").vector_field(), v) == 0.0);

  EdgeField a = sample_field(t, {ConductanceLaw::uniform(0.25, 1.0, 0.25), {3}}, 0);
  write_field(dir / "a.field", a);
  FieldFile ra = read_field(dir / "a.field");
  CHECK(ra.meta["delta"].get<double>() == 0.25);
  EdgeField a2 = ra.edge_field(0.25);
  CHECK(std::equal(a.values().begin(), a.values().end(), a2.values().begin()));
  CHECK_THROWS_AS(ra.site_field(), FieldIoError);
}

TEST_CASE("header layout is the documented one") {
  const fs::path dir = scratch("layout");
  Torus t(2, 2);
  SiteField f(t, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  write_field(dir / "f.field", f);
  CHECK(fs::file_size(dir / "f.field") == 8 + 4 * 4 + 8 + 4 * 8);
  std::ifstream is(dir / "f.field", std::ios::binary);
  char magic[8];
  is.read(magic, 8);
  CHECK(std::string(magic, 7) == "CLABFLD");
  std::uint32_t hdr[4];
  is.read(reinterpret_cast<char*>(hdr), sizeof hdr);
  CHECK(hdr[0] == 1);
  CHECK(hdr[1] == 2);
  CHECK(hdr[2] == 2);
  CHECK(hdr[3] == 0);
  std::uint64_t count;
  is.read(reinterpret_cast<char*>(&count), 8);
  CHECK(count == 4);
  double v[4];
  is.read(reinterpret_cast<char*>(v), sizeof v);
  CHECK(v[2] == 3.0);
}

TEST_CASE("corrupt files are rejected") {
  const fs::path dir = scratch("corrupt");
  {
    std::ofstream os(dir / "bad.field", std::ios::binary);
    os << "NOTAFIELD";
  }
  CHECK_THROWS_AS(read_field(dir / "bad.field"), FieldIoError);
  CHECK_THROWS_AS(read_field(dir / "missing.field"), FieldIoError);
  Torus t(2, 4);
  write_field(dir / "ok.field", SiteField(t, 1.0));
  fs::resize_file(dir / "ok.field", fs::file_size(dir / "ok.field") - 8);
  CHECK_THROWS_AS(read_field(dir / "ok.field"), FieldIoError);
}

TEST_CASE("concurrent writers never leave a torn file") {
  const fs::path dir = scratch("concurrent");
  Torus t(3, 8);
  std::vector<std::thread> ws;
  for (int k = 0; k < 4; ++k) {
    ws.emplace_back([&, k] {
      for (int rep = 0; rep < 10; ++rep) write_field(dir / "same.field", SiteField(t, k + 1.0));
    });
  }
  for (auto& w : ws) w.join();
  SiteField f = read_field(dir / "same.field").site_field();
  const double v = f[0];
  CHECK(v >= 1.0);
  CHECK(v <= 4.0);
  CHECK(f.max_abs() == v);
  int leftovers = 0;
  for (auto& e : fs::directory_iterator(dir)) leftovers += e.path().string().find(".tmp.") != std::string::npos;
  CHECK(leftovers == 0);
}
