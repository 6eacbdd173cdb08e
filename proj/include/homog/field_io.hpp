#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "homog/oscillator_fields.hpp"

namespace homog::fields {

nlohmann::json geometry_to_json(const CellGeometry& geometry);
CellGeometry geometry_from_json(const nlohmann::json& doc, const std::string& path = "");

struct GridEncoding {
  enum Kind { Base64, Sidecar } kind = Base64;
  std::filesystem::path sidecar;  // written relative to the document directory
};

/// {"geometry": ..., "kind": ..., generator fields, "offset", "time_factor"}.
nlohmann::json field_to_json(const OscillatoryField& field, const GridEncoding& encoding = {},
                             const std::filesystem::path& base_dir = ".");
/// `base_dir` resolves sidecar paths. Unknown keys are rejected.
OscillatoryField field_from_json(const nlohmann::json& doc, const std::string& path = "",
                                 const std::filesystem::path& base_dir = ".");

std::string base64_encode(const std::vector<double>& values);
std::vector<double> base64_decode(const std::string& text);

}  // namespace homog::fields

namespace homog::binary {

/// Raw little-endian float64 array.
void write_f64(const std::filesystem::path& file, const std::vector<double>& values);
std::vector<double> read_f64(const std::filesystem::path& file);

}  // namespace homog::binary
