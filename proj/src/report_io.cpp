#include "homog/report_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "homog/error.hpp"

namespace homog::report {

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return {buf, res.ptr};
}

std::string format_short(double value) {
  if (!std::isfinite(value)) return format_number(value);
  char buf[64];
  return {buf, std::to_chars(buf, buf + sizeof buf, value).ptr};
}

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {
  if (columns_.empty()) throw UsageError("CSV table needs at least one column");
}

void CsvTable::add(std::vector<Cell> row) {
  if (row.size() != columns_.size())
    throw UsageError("CSV row has " + std::to_string(row.size()) + " cells, expected " +
                     std::to_string(columns_.size()));
  std::vector<std::string> out;
  out.reserve(row.size());
  for (auto& c : row) {
    if (c.text.find_first_of(",\"\n") != std::string::npos)
      throw UsageError("CSV cell must not contain separators: " + c.text);
    out.push_back(std::move(c.text));
  }
  rows_.push_back(std::move(out));
}

std::string CsvTable::str() const {
  std::string s;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) s += ',';
      s += cells[i];
    }
    s += '\n';
  };
  line(columns_);
  for (const auto& r : rows_) line(r);
  return s;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open " + file.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw UsageError("write failed: " + file.string());
}

void write_csv(const std::filesystem::path& file, const CsvTable& table) { write_text(file, table.str()); }

std::string json_text(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

void write_json(const std::filesystem::path& file, const nlohmann::json& doc) { write_text(file, json_text(doc)); }

}  // namespace homog::report
