#pragma once

// Binary field files plus JSON sidecars. Layout is described in
// docs/field-format.md.

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include "clab/lattice.hpp"
#include "json.hpp"

namespace clab {

enum class FieldKind : std::uint32_t { Site = 0, Vector = 1, Edge = 2 };

class FieldIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FieldFile {
  FieldKind kind = FieldKind::Site;
  int d = 0;
  int L = 0;
  std::vector<double> values;
  nlohmann::json meta;

  Torus torus() const;
  SiteField site_field() const;
  VectorField vector_field() const;
  EdgeField edge_field(double delta) const;
};

/// Writes `path` and `path.json` through temporary files renamed into place.
void write_field(const std::filesystem::path& path, FieldKind kind, const Torus& t,
                 std::span<const double> values, const nlohmann::json& meta = nlohmann::json::object());
void write_field(const std::filesystem::path& path, const SiteField& f,
                 const nlohmann::json& meta = nlohmann::json::object());
void write_field(const std::filesystem::path& path, const VectorField& f,
                 const nlohmann::json& meta = nlohmann::json::object());
void write_field(const std::filesystem::path& path, const EdgeField& f,
                 const nlohmann::json& meta = nlohmann::json::object());

/// Reads a field; the sidecar is optional and loaded when present.
FieldFile read_field(const std::filesystem::path& path);

/// Writes text atomically (temp file in the same directory + rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace clab
