#include "homog/macro_functions.hpp"

#include <cmath>
#include <numbers>

#include "homog/error.hpp"
#include "homog/field_io.hpp"
#include "homog/json_util.hpp"

namespace homog::macro {

namespace ju = homog::json_util;
using nlohmann::json;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

MacroFunction::MacroFunction(int dimension, std::vector<MacroTerm> terms) : dimension_(dimension) {
  if (dimension < 1) throw UsageError("macro dimension must be >= 1");
  for (auto& t : terms) {
    if (t.powers.empty()) t.powers.assign(static_cast<std::size_t>(dimension), 0);
    if (t.k.empty()) t.k.assign(static_cast<std::size_t>(dimension), 0.0);
    if (t.powers.size() != static_cast<std::size_t>(dimension) || t.k.size() != static_cast<std::size_t>(dimension))
      throw UsageError("macro term has wrong dimension");
    for (int p : t.powers)
      if (p < 0) throw UsageError("macro powers must be nonnegative");
    if (t.coefficient != 0.0) terms_.push_back(std::move(t));
  }
}

MacroFunction MacroFunction::constant(int dimension, double value) { return {dimension, {{value, {}, {}, 0.0}}}; }

MacroFunction MacroFunction::monomial(int dimension, int axis, int power, double coefficient) {
  MacroTerm t{coefficient, std::vector<int>(static_cast<std::size_t>(dimension), 0), {}, 0.0};
  t.powers.at(static_cast<std::size_t>(axis)) = power;
  return {dimension, {t}};
}

MacroFunction MacroFunction::sine(int dimension, int axis, double k, double coefficient) {
  MacroTerm t{coefficient, {}, std::vector<double>(static_cast<std::size_t>(dimension), 0.0), -0.5 * std::numbers::pi};
  t.k.at(static_cast<std::size_t>(axis)) = k;
  return {dimension, {t}};
}

MacroFunction MacroFunction::cosine(int dimension, int axis, double k, double coefficient) {
  MacroTerm t{coefficient, {}, std::vector<double>(static_cast<std::size_t>(dimension), 0.0), 0.0};
  t.k.at(static_cast<std::size_t>(axis)) = k;
  return {dimension, {t}};
}

double MacroFunction::operator()(std::span<const double> X) const {
  if (X.size() != static_cast<std::size_t>(dimension_))
    throw UsageError("macro point has dimension " + std::to_string(X.size()) + ", expected " + std::to_string(dimension_));
  double v = 0.0;
  for (const auto& t : terms_) {
    double m = t.coefficient;
    double dot = 0.0;
    for (int i = 0; i < dimension_; ++i) {
      for (int p = 0; p < t.powers[i]; ++p) m *= X[i];
      dot += t.k[i] * X[i];
    }
    v += m * std::cos(kTwoPi * dot + t.phase);
  }
  return v;
}

MacroFunction MacroFunction::derivative(int axis) const {
  if (axis < 0 || axis >= dimension_) throw UsageError("derivative axis out of range");
  std::vector<MacroTerm> out;
  for (const auto& t : terms_) {
    if (t.powers[axis] > 0) {
      MacroTerm d = t;
      d.coefficient *= t.powers[axis];
      d.powers[axis] -= 1;
      out.push_back(d);
    }
    if (t.k[axis] != 0.0) {
      MacroTerm d = t;
      d.coefficient *= kTwoPi * t.k[axis];
      d.phase += 0.5 * std::numbers::pi;
      out.push_back(d);
    }
  }
  return {dimension_, out};
}

MacroFunction MacroFunction::operator*(const MacroFunction& other) const {
  if (other.dimension_ != dimension_) throw UsageError("macro product dimension mismatch");
  std::vector<MacroTerm> out;
  for (const auto& a : terms_)
    for (const auto& b : other.terms_) {
      MacroTerm s{0.5 * a.coefficient * b.coefficient, a.powers, a.k, a.phase + b.phase};
      MacroTerm d{0.5 * a.coefficient * b.coefficient, a.powers, a.k, a.phase - b.phase};
      for (int i = 0; i < dimension_; ++i) {
        s.powers[i] += b.powers[i];
        d.powers[i] += b.powers[i];
        s.k[i] += b.k[i];
        d.k[i] -= b.k[i];
      }
      out.push_back(s);
      out.push_back(d);
    }
  return {dimension_, out};
}

MacroFunction MacroFunction::operator+(const MacroFunction& other) const {
  if (other.dimension_ != dimension_) throw UsageError("macro sum dimension mismatch");
  std::vector<MacroTerm> out = terms_;
  out.insert(out.end(), other.terms_.begin(), other.terms_.end());
  return {dimension_, out};
}

MacroFunction MacroFunction::scaled(double factor) const {
  std::vector<MacroTerm> out = terms_;
  for (auto& t : out) t.coefficient *= factor;
  return {dimension_, out};
}

bool MacroFunction::is_zero() const { return terms_.empty(); }

SeparableField::SeparableField(std::vector<Term> terms) {
  for (auto& t : terms) {
    if (!terms_.empty()) {
      if (t.macro.dimension() != terms_.front().macro.dimension())
        throw UsageError("separable terms have different macro dimensions");
      if (!(t.cell.geometry() == terms_.front().cell.geometry()))
        throw GeometryMismatch("separable terms live on different cells");
    }
    if (!t.macro.is_zero()) terms_.push_back(std::move(t));
  }
}

SeparableField SeparableField::macro_only(const MacroFunction& g, const fields::CellGeometry& geometry) {
  SeparableField s;
  if (!g.is_zero()) s.terms_.push_back({g, fields::OscillatoryField::constant(1.0, geometry)});
  return s;
}

SeparableField SeparableField::product(const MacroFunction& g, const fields::OscillatoryField& h) {
  return SeparableField({{g, h}});
}

int SeparableField::macro_dimension() const { return terms_.empty() ? 0 : terms_.front().macro.dimension(); }

const fields::CellGeometry& SeparableField::geometry() const {
  if (terms_.empty()) throw UsageError("empty separable field has no geometry");
  return terms_.front().cell.geometry();
}

bool SeparableField::has_time_factor() const {
  for (const auto& t : terms_)
    if (t.cell.time_factor()) return true;
  return false;
}

double SeparableField::operator()(std::span<const double> X, std::span<const double> y, double tau) const {
  double v = 0.0;
  for (const auto& t : terms_) v += t.macro(X) * t.cell(y, tau);
  return v;
}

SeparableField SeparableField::macro_derivative(int axis) const {
  std::vector<Term> out;
  for (const auto& t : terms_) out.push_back({t.macro.derivative(axis), t.cell});
  return SeparableField(out);
}

SeparableField SeparableField::cell_derivative(int axis) const {
  std::vector<Term> out;
  for (const auto& t : terms_) out.push_back({t.macro, fields::cell_derivative(t.cell, axis)});
  return SeparableField(out);
}

SeparableField SeparableField::operator+(const SeparableField& other) const {
  std::vector<Term> out = terms_;
  out.insert(out.end(), other.terms_.begin(), other.terms_.end());
  return SeparableField(out);
}

SeparableField SeparableField::operator*(const SeparableField& other) const {
  std::vector<Term> out;
  for (const auto& a : terms_)
    for (const auto& b : other.terms_) out.push_back({a.macro * b.macro, fields::product(a.cell, b.cell)});
  return SeparableField(out);
}

SeparableField SeparableField::scaled(double factor) const {
  std::vector<Term> out;
  for (const auto& t : terms_) out.push_back({t.macro.scaled(factor), t.cell});
  return SeparableField(out);
}

double best_mean(const fields::OscillatoryField& h) {
  try {
    return fields::mean_value(h, fields::MeanMethod::Exact).value;
  } catch (const UnsupportedOperation&) {
  }
  if (h.geometry().kind() == fields::CellKind::SlowOscillation ||
      (h.time_factor() && h.time_factor()->geometry().kind() == fields::CellKind::SlowOscillation))
    return fields::mean_value(h, fields::MeanMethod::ExpandingWindow).value;
  return fields::mean_value(h, fields::MeanMethod::CellQuadrature).value;
}

MacroFunction SeparableField::cell_mean() const {
  const int dim = macro_dimension();
  MacroFunction out(std::max(dim, 1), {});
  for (const auto& t : terms_) out = out + t.macro.scaled(best_mean(t.cell));
  return out;
}

json to_json(const MacroFunction& g) {
  json terms = json::array();
  for (const auto& t : g.terms())
    terms.push_back({{"coefficient", t.coefficient}, {"powers", t.powers}, {"k", t.k}, {"phase", t.phase}});
  return terms;
}

MacroFunction macro_from_json(const json& doc, int dimension, const std::string& path) {
  if (doc.is_number()) return MacroFunction::constant(dimension, doc.get<double>());
  if (!doc.is_array()) throw ParseError("expected a number or an array of macro terms", path);
  std::vector<MacroTerm> terms;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto p = ju::child(path, i);
    ju::require_keys(doc[i], p, {"coefficient", "powers", "k", "phase"});
    MacroTerm t;
    t.coefficient = ju::get_or<double>(doc[i], p, "coefficient", 1.0);
    t.powers = ju::get_or<std::vector<int>>(doc[i], p, "powers", {});
    t.k = ju::get_or<std::vector<double>>(doc[i], p, "k", {});
    t.phase = ju::get_or<double>(doc[i], p, "phase", 0.0);
    terms.push_back(t);
  }
  try {
    return {dimension, terms};
  } catch (const UsageError& e) {
    throw ParseError(e.what(), path);
  }
}

json to_json(const SeparableField& s) {
  json out = json::array();
  for (const auto& t : s.terms()) out.push_back({{"macro", to_json(t.macro)}, {"cell", fields::field_to_json(t.cell)}});
  return out;
}

SeparableField separable_from_json(const json& doc, int dimension, const std::string& path) {
  if (!doc.is_array()) throw ParseError("expected an array of {macro, cell} terms", path);
  std::vector<SeparableField::Term> terms;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto p = ju::child(path, i);
    ju::require_keys(doc[i], p, {"macro", "cell"});
    const MacroFunction g = doc[i].contains("macro") ? macro_from_json(doc[i].at("macro"), dimension, ju::child(p, "macro"))
                                                     : MacroFunction::constant(dimension, 1.0);
    terms.push_back({g, fields::field_from_json(ju::at(doc[i], p, "cell"), ju::child(p, "cell"))});
  }
  try {
    return SeparableField(terms);
  } catch (const ParseError&) {
    throw;
  } catch (const UsageError& e) {
    throw ParseError(e.what(), path);
  }
}

}  // namespace homog::macro
