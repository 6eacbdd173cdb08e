#pragma once

// Experiment configuration documents. Human-authored configs use a TOML
// subset (tables, arrays of tables, inline tables, arrays, strings, numbers,
// booleans, comments); machine round trips use JSON. Both are loaded into a
// JSON tree with a map from JSON pointer to source line for error reporting.

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "homog/error.hpp"

namespace homog::config {

using json = nlohmann::json;

/// Malformed config text (as opposed to a well-formed document with bad
/// content, which raises ParseError with a JSON pointer).
class SyntaxError : public ParseError {
 public:
  SyntaxError(const std::string& what, int line) : ParseError(what, ""), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct Document {
  json data;
  std::map<std::string, int> lines;  // JSON pointer -> 1-based line
  std::string name = "<config>";
};

Document parse_toml(const std::string& text, const std::string& name = "<toml>");
Document parse_json(const std::string& text, const std::string& name = "<json>");
/// Chooses the format by extension (.json, anything else is TOML).
Document load(const std::filesystem::path& file);

/// TOML text for an object tree; nested objects become [tables] and arrays of
/// objects become [[arrays of tables]]. Null values are rejected.
std::string to_toml(const json& doc);

/// Line of `pointer` or of its nearest recorded ancestor (0 when unknown).
int line_of(const Document& doc, const std::string& pointer);

/// "name:line: message (at /pointer)".
std::string describe(const Document& doc, const ParseError& error);

}  // namespace homog::config
