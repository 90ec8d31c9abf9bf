#include "clab/field_io.hpp"

#include <array>
#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

namespace clab {

namespace {

constexpr std::array<char, 8> kMagic{'C', 'L', 'A', 'B', 'F', 'L', 'D', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "field files are little-endian");

std::filesystem::path temp_name(const std::filesystem::path& p) {
  static std::atomic<unsigned> counter{0};
  std::ostringstream os;
  os << p.filename().string() << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id())
     << "." << counter++;
  return p.parent_path() / os.str();
}

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FieldIoError("truncated field header");
  return v;
}

void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

void commit(const std::filesystem::path& tmp, const std::filesystem::path& dst) {
  std::error_code ec;
  std::filesystem::rename(tmp, dst, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw FieldIoError("cannot rename into " + dst.string());
  }
}

}  // namespace

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  ensure_parent(path);
  const auto tmp = temp_name(path);
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw FieldIoError("cannot open " + tmp.string());
    os << text;
    if (!os) throw FieldIoError("write failed for " + tmp.string());
  }
  commit(tmp, path);
}

void write_field(const std::filesystem::path& path, FieldKind kind, const Torus& t,
                 std::span<const double> values, const nlohmann::json& meta) {
  const std::size_t expect = kind == FieldKind::Site ? t.sites() : t.edges();
  if (values.size() != expect) throw FieldIoError("field length does not match its kind");
  ensure_parent(path);
  const auto tmp = temp_name(path);
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw FieldIoError("cannot open " + tmp.string());
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, kVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.side_sites()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(kind));
    put<std::uint64_t>(os, values.size());
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!os) throw FieldIoError("write failed for " + tmp.string());
  }
  nlohmann::json side = meta;
  side["format_version"] = kVersion;
  side["d"] = t.dim();
  side["L"] = t.side_sites();
  side["side"] = t.side();
  side["kind"] = kind == FieldKind::Site ? "site" : (kind == FieldKind::Vector ? "vector" : "edge");
  write_text_atomic(path.string() + ".json", side.dump(2) + "\n");
  commit(tmp, path);
}

void write_field(const std::filesystem::path& path, const SiteField& f, const nlohmann::json& meta) {
  write_field(path, FieldKind::Site, f.torus(), f.values(), meta);
}

void write_field(const std::filesystem::path& path, const VectorField& f,
                 const nlohmann::json& meta) {
  write_field(path, FieldKind::Vector, f.torus(), f.values(), meta);
}

void write_field(const std::filesystem::path& path, const EdgeField& f, const nlohmann::json& meta) {
  nlohmann::json m = meta;
  m["delta"] = f.delta();
  write_field(path, FieldKind::Edge, f.torus(), f.values(), m);
}

FieldFile read_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FieldIoError("cannot open " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw FieldIoError(path.string() + " is not a field file");
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw FieldIoError("unsupported field format version");
  FieldFile f;
  f.d = static_cast<int>(get<std::uint32_t>(is));
  f.L = static_cast<int>(get<std::uint32_t>(is));
  const auto kind = get<std::uint32_t>(is);
  if (kind > 2) throw FieldIoError("unknown field kind");
  f.kind = static_cast<FieldKind>(kind);
  const auto count = get<std::uint64_t>(is);
  Torus t(f.d, f.L);
  const std::size_t expect = f.kind == FieldKind::Site ? t.sites() : t.edges();
  if (count != expect) throw FieldIoError("field length does not match header");
  f.values.resize(count);
  is.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw FieldIoError("truncated field payload");
  std::ifstream js(path.string() + ".json");
  if (js) f.meta = nlohmann::json::parse(js);
  return f;
}

Torus FieldFile::torus() const {
  const double side = meta.contains("side") ? meta["side"].get<double>() : 0.0;
  return Torus(d, L, side);
}

SiteField FieldFile::site_field() const {
  if (kind != FieldKind::Site) throw FieldIoError("field is not a site field");
  return SiteField(torus(), values);
}

VectorField FieldFile::vector_field() const {
  if (kind != FieldKind::Vector) throw FieldIoError("field is not a vector field");
  VectorField v(torus());
  std::copy(values.begin(), values.end(), v.values().begin());
  return v;
}

EdgeField FieldFile::edge_field(double delta) const {
  if (kind != FieldKind::Edge) throw FieldIoError("field is not an edge field");
  return EdgeField(torus(), delta, values);
}

}  // namespace clab
