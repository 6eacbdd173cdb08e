#pragma once

// Deterministic CSV and JSON writers for study artifacts. Numbers are printed
// with 17 significant digits so reruns produce identical bytes.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace homog::report {

/// Shortest round-trip-safe "%.17g"-style text of a double.
std::string format_number(double value);
/// Shortest text that parses back to the same double (for messages).
std::string format_short(double value);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);

  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t rows() const { return rows_.size(); }

  /// Cells are either numbers or preformatted text.
  struct Cell {
    Cell(double v) : text(format_number(v)) {}
    Cell(int v) : text(std::to_string(v)) {}
    Cell(long v) : text(std::to_string(v)) {}
    Cell(std::size_t v) : text(std::to_string(v)) {}
    Cell(const char* s) : text(s) {}
    Cell(std::string s) : text(std::move(s)) {}
    std::string text;
  };
  void add(std::vector<Cell> row);

  std::string str() const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// Writes bytes verbatim and returns them (for hashing by the caller).
void write_text(const std::filesystem::path& file, const std::string& text);
void write_csv(const std::filesystem::path& file, const CsvTable& table);
/// Two-space indented JSON with a trailing newline.
std::string json_text(const nlohmann::json& doc);
void write_json(const std::filesystem::path& file, const nlohmann::json& doc);

}  // namespace homog::report
