#include "homog/field_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "homog/json_util.hpp"

namespace homog::fields {

using nlohmann::json;
namespace ju = homog::json_util;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::vector<unsigned char> to_le_bytes(const std::vector<double>& values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return bytes;
}

std::vector<double> from_le_bytes(const std::vector<unsigned char>& bytes) {
  if (bytes.size() % 8 != 0) throw UsageError("binary float64 payload length is not a multiple of 8");
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

json terms_to_json(const TrigPolynomial& p) {
  json terms = json::array();
  for (const auto& t : p.terms) terms.push_back(json::array({t.k, t.amplitude, t.phase}));
  return terms;
}

}  // namespace

std::string base64_encode(const std::vector<double>& values) {
  const auto bytes = to_le_bytes(values);
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t n = (static_cast<std::uint32_t>(bytes[i]) << 16) |
                            (i + 1 < bytes.size() ? static_cast<std::uint32_t>(bytes[i + 1]) << 8 : 0u) |
                            (i + 2 < bytes.size() ? static_cast<std::uint32_t>(bytes[i + 2]) : 0u);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[n & 63] : '=';
  }
  return out;
}

std::vector<double> base64_decode(const std::string& text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kAlphabet[i])] = i;
  std::vector<unsigned char> bytes;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r' || c == ' ') continue;
    const int v = lookup[static_cast<unsigned char>(c)];
    if (v < 0) throw UsageError("invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      bytes.push_back(static_cast<unsigned char>((acc >> bits) & 0xFF));
    }
  }
  return from_le_bytes(bytes);
}

json geometry_to_json(const CellGeometry& g) {
  json doc;
  doc["kind"] = to_string(g.kind());
  doc["dimension"] = g.dimension();
  switch (g.kind()) {
    case CellKind::PeriodicTorus: doc["periods"] = g.periods(); break;
    case CellKind::Quasiperiodic:
      doc["frequencies"] = g.base_frequencies();
      doc["independent"] = g.declared_independent();
      break;
    case CellKind::SlowOscillation:
      doc["exponent"] = g.exponent();
      doc["shifts"] = g.shifts();
      break;
  }
  return doc;
}

CellGeometry geometry_from_json(const json& doc, const std::string& path) {
  ju::require_keys(doc, path, {"kind", "dimension", "periods", "frequencies", "independent", "exponent", "shifts"});
  const std::string kind = ju::string(ju::at(doc, path, "kind"), ju::child(path, "kind"));
  CellKind k;
  try {
    k = cell_kind_from_string(kind);
  } catch (const UsageError& e) {
    throw ParseError(e.what(), ju::child(path, "kind"));
  }
  const int dim = ju::get_or<int>(doc, path, "dimension", 1);
  try {
    switch (k) {
      case CellKind::PeriodicTorus:
        return CellGeometry::periodic(dim, ju::get_or<std::vector<double>>(doc, path, "periods", {}));
      case CellKind::Quasiperiodic: {
        const auto& f = ju::at(doc, path, "frequencies");
        if (!f.is_array()) throw ParseError("expected an array of frequency vectors", ju::child(path, "frequencies"));
        std::vector<std::vector<double>> freqs;
        for (std::size_t i = 0; i < f.size(); ++i)
          freqs.push_back(ju::numbers(f[i], ju::child(ju::child(path, "frequencies"), i)));
        return CellGeometry::quasiperiodic(dim, freqs, ju::get_or<bool>(doc, path, "independent", true));
      }
      case CellKind::SlowOscillation:
        return CellGeometry::slow_oscillation(ju::number(ju::at(doc, path, "exponent"), ju::child(path, "exponent")),
                                              ju::get_or<std::vector<double>>(doc, path, "shifts", {0.0}));
    }
  } catch (const ParseError&) {
    throw;
  } catch (const UsageError& e) {
    throw ParseError(e.what(), path);
  }
  throw ParseError("unreachable geometry kind", path);
}

json field_to_json(const OscillatoryField& field, const GridEncoding& encoding, const std::filesystem::path& base_dir) {
  json doc;
  doc["geometry"] = geometry_to_json(field.geometry());
  std::visit(
      [&](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, TrigPolynomial>) {
          doc["kind"] = "trig-polynomial";
          doc["terms"] = terms_to_json(g);
        } else if constexpr (std::is_same_v<T, GridSample>) {
          doc["kind"] = "grid-sample";
          doc["shape"] = g.shape;
          doc["order"] = g.order;
          if (encoding.kind == GridEncoding::Sidecar) {
            doc["encoding"] = "sidecar";
            doc["path"] = encoding.sidecar.generic_string();
            binary::write_f64(base_dir / encoding.sidecar, g.values);
          } else {
            doc["encoding"] = "base64";
            doc["data"] = base64_encode(g.values);
          }
        } else if constexpr (std::is_same_v<T, PiecewiseConstant>) {
          doc["kind"] = "piecewise-constant";
          doc["breaks"] = g.breaks;
          doc["values"] = g.values;
        } else {
          doc["kind"] = "slow-oscillation";
          doc["constant"] = g.constant;
          json terms = json::array();
          for (const auto& t : g.terms) terms.push_back(json::array({t.coefficient, t.shifts}));
          doc["terms"] = terms;
        }
      },
      field.generator());
  bool any_offset = false;
  for (double v : field.offset()) any_offset = any_offset || v != 0.0;
  if (any_offset) doc["offset"] = field.offset();
  if (field.time_factor()) doc["time_factor"] = field_to_json(*field.time_factor(), encoding, base_dir);
  return doc;
}

OscillatoryField field_from_json(const json& doc, const std::string& path, const std::filesystem::path& base_dir) {
  ju::require_keys(doc, path, {"geometry", "kind", "terms", "shape", "order", "encoding", "data", "path", "breaks",
                               "values", "constant", "offset", "time_factor"});
  const CellGeometry geometry =
      doc.contains("geometry") ? geometry_from_json(doc.at("geometry"), ju::child(path, "geometry"))
                               : CellGeometry::periodic(1);
  const std::string kind = ju::string(ju::at(doc, path, "kind"), ju::child(path, "kind"));
  Generator gen;
  if (kind == "trig-polynomial" || kind == "constant") {
    TrigPolynomial p;
    if (kind == "constant") {
      if (geometry.kind() == CellKind::SlowOscillation) {
        gen = SlowOscillation{ju::number(ju::at(doc, path, "constant"), ju::child(path, "constant")), {}};
      } else {
        p.terms.push_back({std::vector<int>(static_cast<std::size_t>(geometry.frequency_rank()), 0),
                           ju::number(ju::at(doc, path, "constant"), ju::child(path, "constant")), 0.0});
        gen = p;
      }
    } else {
      const auto tpath = ju::child(path, "terms");
      const auto& terms = ju::at(doc, path, "terms");
      if (!terms.is_array()) throw ParseError("expected an array of [k, amplitude, phase] triples", tpath);
      for (std::size_t i = 0; i < terms.size(); ++i) {
        const auto ip = ju::child(tpath, i);
        const auto& t = terms[i];
        if (!t.is_array() || t.size() < 2 || t.size() > 3) throw ParseError("expected [k, amplitude, phase]", ip);
        TrigTerm term;
        term.k = ju::integers(t[0], ju::child(ip, 0));
        term.amplitude = ju::number(t[1], ju::child(ip, 1));
        term.phase = t.size() == 3 ? ju::number(t[2], ju::child(ip, 2)) : 0.0;
        p.terms.push_back(std::move(term));
      }
      gen = p;
    }
  } else if (kind == "grid-sample") {
    GridSample g;
    g.shape = ju::integers(ju::at(doc, path, "shape"), ju::child(path, "shape"));
    g.order = ju::get_or<int>(doc, path, "order", 1);
    const std::string enc = ju::get_or<std::string>(doc, path, "encoding", "base64");
    if (enc == "base64") {
      try {
        g.values = base64_decode(ju::string(ju::at(doc, path, "data"), ju::child(path, "data")));
      } catch (const ParseError&) {
        throw;
      } catch (const UsageError& e) {
        throw ParseError(e.what(), ju::child(path, "data"));
      }
    } else if (enc == "sidecar") {
      const auto file = base_dir / ju::string(ju::at(doc, path, "path"), ju::child(path, "path"));
      try {
        g.values = binary::read_f64(file);
      } catch (const UsageError& e) {
        throw ParseError(e.what(), ju::child(path, "path"));
      }
    } else {
      throw ParseError("encoding must be 'base64' or 'sidecar'", ju::child(path, "encoding"));
    }
    gen = g;
  } else if (kind == "piecewise-constant") {
    PiecewiseConstant pc;
    const auto& b = ju::at(doc, path, "breaks");
    if (!b.is_array()) throw ParseError("expected an array of breakpoint lists", ju::child(path, "breaks"));
    for (std::size_t i = 0; i < b.size(); ++i) pc.breaks.push_back(ju::numbers(b[i], ju::child(ju::child(path, "breaks"), i)));
    pc.values = ju::numbers(ju::at(doc, path, "values"), ju::child(path, "values"));
    gen = pc;
  } else if (kind == "slow-oscillation") {
    SlowOscillation s;
    s.constant = ju::get_or<double>(doc, path, "constant", 0.0);
    if (doc.contains("terms")) {
      const auto tpath = ju::child(path, "terms");
      const auto& terms = doc.at("terms");
      if (!terms.is_array()) throw ParseError("expected an array of [coefficient, shifts] pairs", tpath);
      for (std::size_t i = 0; i < terms.size(); ++i) {
        const auto ip = ju::child(tpath, i);
        if (!terms[i].is_array() || terms[i].size() != 2) throw ParseError("expected [coefficient, shifts]", ip);
        s.terms.push_back({ju::number(terms[i][0], ju::child(ip, 0)), ju::numbers(terms[i][1], ju::child(ip, 1))});
      }
    }
    gen = s;
  } else {
    throw ParseError("unknown field kind '" + kind + "'", ju::child(path, "kind"));
  }
  try {
    OscillatoryField field(geometry, std::move(gen));
    if (doc.contains("offset")) field = field.with_offset(ju::numbers(doc.at("offset"), ju::child(path, "offset")));
    if (doc.contains("time_factor"))
      field = field.with_time_factor(field_from_json(doc.at("time_factor"), ju::child(path, "time_factor"), base_dir));
    return field;
  } catch (const ParseError&) {
    throw;
  } catch (const UsageError& e) {
    throw ParseError(e.what(), path);
  }
}

}  // namespace homog::fields

namespace homog::binary {

void write_f64(const std::filesystem::path& file, const std::vector<double>& values) {
  const auto bytes = fields::to_le_bytes(values);
  std::ofstream out(file, std::ios::binary);
  if (!out) throw UsageError("cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> read_f64(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw UsageError("cannot read " + file.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fields::from_le_bytes(bytes);
}

}  // namespace homog::binary
