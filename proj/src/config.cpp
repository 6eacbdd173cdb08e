#include "homog/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <vector>

#include "homog/report_io.hpp"

namespace homog::config {

namespace {

std::string pointer_child(const std::string& base, const std::string& key) { return base + "/" + key; }

bool bare_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }

class TomlParser {
 public:
  TomlParser(const std::string& text, Document& doc) : s_(text), doc_(doc) {}

  void run() {
    doc_.data = json::object();
    json* table = &doc_.data;
    std::string table_ptr;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        const bool array = pos_ + 1 < s_.size() && s_[pos_ + 1] == '[';
        pos_ += array ? 2 : 1;
        const int header_line = line_;
        const auto keys = parse_key_path();
        skip_ws();
        expect(']');
        if (array) expect(']');
        end_of_line();
        table = open_table(keys, array, header_line, table_ptr);
        continue;
      }
      parse_assignment(*table, table_ptr);
      end_of_line();
    }
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(msg, line_); }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }

  void newline() {
    if (peek() == '\r') ++pos_;
    if (peek() != '\n') fail("expected end of line");
    ++pos_;
    ++line_;
  }

  void skip_blank_lines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (eof()) return;
      if (peek() == '\n' || peek() == '\r') {
        newline();
        continue;
      }
      return;
    }
  }

  // Whitespace, comments and newlines inside arrays.
  void skip_ws_multiline() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\n' || peek() == '\r')
        newline();
      else
        return;
    }
  }

  void end_of_line() {
    skip_ws();
    skip_comment();
    if (!eof()) newline();
  }

  std::string parse_key() {
    skip_ws();
    if (peek() == '"' || peek() == '\'') return parse_string();
    const std::size_t start = pos_;
    while (!eof() && bare_char(peek())) ++pos_;
    if (pos_ == start) fail("expected a key");
    return s_.substr(start, pos_ - start);
  }

  std::vector<std::string> parse_key_path() {
    std::vector<std::string> keys{parse_key()};
    skip_ws();
    while (peek() == '.') {
      ++pos_;
      keys.push_back(parse_key());
      skip_ws();
    }
    return keys;
  }

  json* open_table(const std::vector<std::string>& keys, bool array, int header_line, std::string& ptr) {
    json* t = &doc_.data;
    ptr.clear();
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const bool last = i + 1 == keys.size();
      ptr = pointer_child(ptr, keys[i]);
      json& slot = (*t)[keys[i]];
      if (last && array) {
        if (slot.is_null()) slot = json::array();
        if (!slot.is_array()) throw SyntaxError("'" + keys[i] + "' is not an array of tables", header_line);
        slot.push_back(json::object());
        ptr = pointer_child(ptr, std::to_string(slot.size() - 1));
        doc_.lines.emplace(ptr, header_line);
        return &slot.back();
      }
      if (slot.is_null()) {
        slot = json::object();
        doc_.lines.emplace(ptr, header_line);
      } else if (last && defined_.count(ptr)) {
        throw SyntaxError("table '" + ptr + "' defined twice", header_line);
      }
      if (slot.is_array()) {
        if (last) throw SyntaxError("'" + keys[i] + "' is an array of tables", header_line);
        if (slot.empty() || !slot.back().is_object()) throw SyntaxError("'" + keys[i] + "' is not a table", header_line);
        ptr = pointer_child(ptr, std::to_string(slot.size() - 1));
        t = &slot.back();
        continue;
      }
      if (!slot.is_object()) throw SyntaxError("'" + keys[i] + "' is not a table", header_line);
      t = &slot;
    }
    defined_.insert(ptr);
    return t;
  }

  void parse_assignment(json& table, const std::string& table_ptr) {
    const int key_line = line_;
    const auto keys = parse_key_path();
    skip_ws();
    expect('=');
    skip_ws();
    json* t = &table;
    std::string ptr = table_ptr;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
      ptr = pointer_child(ptr, keys[i]);
      json& slot = (*t)[keys[i]];
      if (slot.is_null()) {
        slot = json::object();
        doc_.lines.emplace(ptr, key_line);
      }
      if (!slot.is_object()) fail("'" + keys[i] + "' is not a table");
      t = &slot;
    }
    ptr = pointer_child(ptr, keys.back());
    if (t->contains(keys.back())) fail("duplicate key '" + keys.back() + "'");
    doc_.lines[ptr] = key_line;
    (*t)[keys.back()] = parse_value(ptr);
  }

  json parse_value(const std::string& ptr) {
    const char c = peek();
    if (c == '"' || c == '\'') return parse_string();
    if (c == '[') return parse_array(ptr);
    if (c == '{') return parse_inline_table(ptr);
    if (s_.compare(pos_, 4, "true") == 0 && !bare_char(pos_ + 4 < s_.size() ? s_[pos_ + 4] : ' ')) {
      pos_ += 4;
      return true;
    }
    if (s_.compare(pos_, 5, "false") == 0 && !bare_char(pos_ + 5 < s_.size() ? s_[pos_ + 5] : ' ')) {
      pos_ += 5;
      return false;
    }
    return parse_number();
  }

  json parse_number() {
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                      peek() == '.' || peek() == '_'))
      ++pos_;
    std::string tok;
    for (std::size_t i = start; i < pos_; ++i)
      if (s_[i] != '_') tok += s_[i];
    if (tok.empty()) fail("expected a value");
    std::string body = tok;
    double sign = 1.0;
    if (body[0] == '+' || body[0] == '-') {
      sign = body[0] == '-' ? -1.0 : 1.0;
      body = body.substr(1);
    }
    if (body == "inf") return sign * std::numeric_limits<double>::infinity();
    if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
    const char* b = tok.data() + (tok[0] == '+' ? 1 : 0);
    const char* e = tok.data() + tok.size();
    if (tok.find_first_of(".eE") == std::string::npos) {
      std::int64_t v = 0;
      const auto r = std::from_chars(b, e, v);
      if (r.ec == std::errc() && r.ptr == e) return v;
      fail("invalid value '" + tok + "'");
    }
    double v = 0;
    const auto r = std::from_chars(b, e, v);
    if (r.ec != std::errc() || r.ptr != e) fail("invalid number '" + tok + "'");
    return v;
  }

  static void append_utf8(std::string& out, unsigned cp) {
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }

  std::string parse_string() {
    const char quote = peek();
    ++pos_;
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = s_[pos_++];
      if (c == quote) return out;
      if (c != '\\' || quote == '\'') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated string");
      const char esc = s_[pos_++];
      switch (esc) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'u': {
          if (pos_ + 4 > s_.size()) fail("bad unicode escape");
          unsigned cp = 0;
          const auto r = std::from_chars(s_.data() + pos_, s_.data() + pos_ + 4, cp, 16);
          if (r.ptr != s_.data() + pos_ + 4) fail("bad unicode escape");
          pos_ += 4;
          append_utf8(out, cp);
          break;
        }
        default: fail(std::string("unknown escape '\\") + esc + "'");
      }
    }
  }

  json parse_array(const std::string& ptr) {
    expect('[');
    json arr = json::array();
    while (true) {
      skip_ws_multiline();
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      const auto p = pointer_child(ptr, std::to_string(arr.size()));
      doc_.lines.emplace(p, line_);
      arr.push_back(parse_value(p));
      skip_ws_multiline();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() != ']') fail("expected ',' or ']' in array");
    }
  }

  json parse_inline_table(const std::string& ptr) {
    expect('{');
    json obj = json::object();
    skip_ws();
    if (peek() == '}') {
      ++pos_;
      return obj;
    }
    while (true) {
      parse_assignment(obj, ptr);
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        skip_ws();
        continue;
      }
      expect('}');
      return obj;
    }
  }

  const std::string& s_;
  Document& doc_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::set<std::string> defined_;
};

// Records the line of every key and array element of a valid JSON text.
class JsonLineScanner {
 public:
  JsonLineScanner(const std::string& text, Document& doc) : s_(text), doc_(doc) {}

  void run() { value(""); }

 private:
  void ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) {
      if (s_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  std::string string() {
    ++pos_;
    std::string raw;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\') raw += s_[pos_++];
      raw += s_[pos_++];
    }
    ++pos_;
    return json::parse("\"" + raw + "\"").get<std::string>();
  }

  void value(const std::string& ptr) {
    ws();
    if (pos_ >= s_.size()) return;
    doc_.lines.emplace(ptr, line_);
    const char c = s_[pos_];
    if (c == '{') {
      ++pos_;
      ws();
      if (s_[pos_] == '}') {
        ++pos_;
        return;
      }
      while (true) {
        ws();
        const int key_line = line_;
        const auto key = string();
        const auto p = pointer_child(ptr, key);
        doc_.lines[p] = key_line;
        ws();
        ++pos_;  // ':'
        value(p);
        doc_.lines[p] = key_line;
        ws();
        if (s_[pos_++] == '}') return;
      }
    }
    if (c == '[') {
      ++pos_;
      ws();
      if (s_[pos_] == ']') {
        ++pos_;
        return;
      }
      for (std::size_t i = 0;; ++i) {
        value(pointer_child(ptr, std::to_string(i)));
        ws();
        if (s_[pos_++] == ']') return;
      }
    }
    if (c == '"') {
      string();
      return;
    }
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '}' &&
           !std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
  }

  const std::string& s_;
  Document& doc_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

bool is_bare_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!bare_char(c)) return false;
  return true;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned>(c));
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out + "\"";
}

std::string key_text(const std::string& k) { return is_bare_key(k) ? k : quote(k); }

bool table_array(const json& v) {
  if (!v.is_array() || v.empty()) return false;
  for (const auto& e : v)
    if (!e.is_object()) return false;
  return true;
}

std::string inline_value(const json& v) {
  switch (v.type()) {
    case json::value_t::boolean: return v.get<bool>() ? "true" : "false";
    case json::value_t::number_integer: return std::to_string(v.get<std::int64_t>());
    case json::value_t::number_unsigned: return std::to_string(v.get<std::uint64_t>());
    case json::value_t::number_float: {
      const double x = v.get<double>();
      std::string t = report::format_short(x);
      if (t.find_first_of(".eEn") == std::string::npos) t += ".0";
      return t;
    }
    case json::value_t::string: return quote(v.get<std::string>());
    case json::value_t::array: {
      std::string out = "[";
      for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + inline_value(v[i]);
      return out + "]";
    }
    case json::value_t::object: {
      std::string out = "{";
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        out += (first ? "" : ", ") + key_text(it.key()) + " = " + inline_value(it.value());
        first = false;
      }
      return out + "}";
    }
    default: throw UsageError("TOML cannot represent null values");
  }
}

void emit_table(std::string& out, const std::string& path, const json& obj, bool array_header) {
  if (!path.empty()) {
    if (!out.empty()) out += '\n';
    out += array_header ? "[[" + path + "]]\n" : "[" + path + "]\n";
  }
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!it.value().is_object() && !table_array(it.value()))
      out += key_text(it.key()) + " = " + inline_value(it.value()) + "\n";
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string sub = (path.empty() ? "" : path + ".") + key_text(it.key());
    if (it.value().is_object())
      emit_table(out, sub, it.value(), false);
    else if (table_array(it.value()))
      for (const auto& e : it.value()) emit_table(out, sub, e, true);
  }
}

}  // namespace

Document parse_toml(const std::string& text, const std::string& name) {
  Document doc;
  doc.name = name;
  TomlParser(text, doc).run();
  doc.lines.emplace("", 1);
  return doc;
}

Document parse_json(const std::string& text, const std::string& name) {
  Document doc;
  doc.name = name;
  try {
    doc.data = json::parse(text);
  } catch (const json::parse_error& e) {
    int line = 1;
    const std::size_t end = std::min<std::size_t>(e.byte, text.size());
    for (std::size_t i = 0; i + 1 < end; ++i)
      if (text[i] == '\n') ++line;
    throw SyntaxError(e.what(), line);
  }
  JsonLineScanner(text, doc).run();
  return doc;
}

Document load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw UsageError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string name = file.string();
  try {
    return file.extension() == ".json" ? parse_json(ss.str(), name) : parse_toml(ss.str(), name);
  } catch (const SyntaxError& e) {
    throw SyntaxError(name + ":" + std::to_string(e.line()) + ": " + e.what(), e.line());
  }
}

std::string to_toml(const json& doc) {
  if (!doc.is_object()) throw UsageError("TOML documents must be tables");
  std::string out;
  emit_table(out, "", doc, false);
  return out;
}

int line_of(const Document& doc, const std::string& pointer) {
  std::string p = pointer;
  while (true) {
    const auto it = doc.lines.find(p);
    if (it != doc.lines.end()) return it->second;
    if (p.empty()) return 0;
    p = p.substr(0, p.rfind('/'));
  }
}

std::string describe(const Document& doc, const ParseError& error) {
  if (const auto* s = dynamic_cast<const SyntaxError*>(&error)) {
    const std::string what = s->what();
    if (what.rfind(doc.name + ":", 0) == 0) return what;
    return doc.name + ":" + std::to_string(s->line()) + ": " + what;
  }
  const int line = line_of(doc, error.path());
  std::string out = doc.name + ":" + std::to_string(line) + ": " + error.what();
  if (!error.path().empty()) out += " (at " + error.path() + ")";
  return out;
}

}  // namespace homog::config
