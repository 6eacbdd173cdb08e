#pragma once

// Smooth functions of the macroscopic variable X = (x_1..x_d[, t]) and
// separable two-scale functions sum_j g_j(X) h_j(y, tau).

#include <span>
#include <vector>

#include <json.hpp>

#include "homog/oscillator_fields.hpp"

namespace homog::macro {

/// coefficient * prod_i X_i^{powers_i} * cos(2 pi k . X + phase)
struct MacroTerm {
  double coefficient = 1.0;
  std::vector<int> powers;
  std::vector<double> k;
  double phase = 0.0;
  bool operator==(const MacroTerm&) const = default;
};

class MacroFunction {
 public:
  MacroFunction() = default;
  MacroFunction(int dimension, std::vector<MacroTerm> terms);

  static MacroFunction constant(int dimension, double value);
  /// X_axis^power.
  static MacroFunction monomial(int dimension, int axis, int power, double coefficient = 1.0);
  /// coefficient * sin(2 pi k X_axis) or cos(...).
  static MacroFunction sine(int dimension, int axis, double k, double coefficient = 1.0);
  static MacroFunction cosine(int dimension, int axis, double k, double coefficient = 1.0);

  int dimension() const { return dimension_; }
  const std::vector<MacroTerm>& terms() const { return terms_; }

  double operator()(std::span<const double> X) const;
  MacroFunction derivative(int axis) const;
  MacroFunction operator*(const MacroFunction& other) const;
  MacroFunction operator+(const MacroFunction& other) const;
  MacroFunction scaled(double factor) const;
  bool is_zero() const;

  bool operator==(const MacroFunction&) const = default;

 private:
  int dimension_ = 1;
  std::vector<MacroTerm> terms_;
};

/// sum_j g_j(X) h_j(y, tau) with every h_j on the same cell geometry.
class SeparableField {
 public:
  struct Term {
    MacroFunction macro;
    fields::OscillatoryField cell;
  };

  SeparableField() = default;
  explicit SeparableField(std::vector<Term> terms);

  static SeparableField macro_only(const MacroFunction& g, const fields::CellGeometry& geometry);
  static SeparableField product(const MacroFunction& g, const fields::OscillatoryField& h);

  const std::vector<Term>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }
  int macro_dimension() const;
  const fields::CellGeometry& geometry() const;
  bool has_time_factor() const;

  double operator()(std::span<const double> X, std::span<const double> y, double tau = 0.0) const;

  SeparableField macro_derivative(int axis) const;
  SeparableField cell_derivative(int axis) const;
  SeparableField operator+(const SeparableField& other) const;
  SeparableField operator*(const SeparableField& other) const;
  SeparableField scaled(double factor) const;

  /// Cell mean as a function of X: sum_j g_j(X) M(h_j), using exact means
  /// where available and cell quadrature otherwise.
  MacroFunction cell_mean() const;

 private:
  std::vector<Term> terms_;
};

/// Mean of a cell field preferring the exact route.
double best_mean(const fields::OscillatoryField& h);

nlohmann::json to_json(const MacroFunction& g);
MacroFunction macro_from_json(const nlohmann::json& doc, int dimension, const std::string& path = "");
nlohmann::json to_json(const SeparableField& s);
SeparableField separable_from_json(const nlohmann::json& doc, int dimension, const std::string& path = "");

}  // namespace homog::macro
