#pragma once

// Concrete generators of functions in an algebra with mean value: periodic
// trigonometric polynomials and grids, quasiperiodic trigonometric
// polynomials over a declared frequency module, and the non-ergodic
// slow-oscillation family cos(|z + a|^alpha). Everything here is immutable
// and pure.

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace homog::fields {

enum class CellKind { PeriodicTorus, Quasiperiodic, SlowOscillation };

std::string to_string(CellKind kind);
CellKind cell_kind_from_string(const std::string& name);

/// The concrete stand-in for the spectrum of the algebra.
class CellGeometry {
 public:
  /// Periodic torus with the given periods (unit cell when empty).
  static CellGeometry periodic(int dimension, std::vector<double> periods = {});
  /// Frequency module spanned by `base_frequencies` (each a vector in R^N).
  /// Rational independence is recorded as declared, never verified.
  static CellGeometry quasiperiodic(int dimension, std::vector<std::vector<double>> base_frequencies,
                                    bool declared_independent = true);
  /// One-dimensional algebra generated by cos(|z + a|^alpha) for the listed shifts a.
  static CellGeometry slow_oscillation(double exponent, std::vector<double> shifts);

  int dimension() const { return dimension_; }
  CellKind kind() const { return kind_; }
  const std::vector<double>& periods() const { return periods_; }
  const std::vector<std::vector<double>>& base_frequencies() const { return base_frequencies_; }
  bool declared_independent() const { return declared_independent_; }
  double exponent() const { return exponent_; }
  const std::vector<double>& shifts() const { return shifts_; }

  /// Number of integer coordinates of a frequency multi-index.
  int frequency_rank() const;
  /// Physical frequency sum_j k_j omega_j of an integer multi-index.
  std::vector<double> frequency(std::span<const int> k) const;

  bool operator==(const CellGeometry&) const = default;

 private:
  CellGeometry() = default;
  int dimension_ = 1;
  CellKind kind_ = CellKind::PeriodicTorus;
  std::vector<double> periods_;
  std::vector<std::vector<double>> base_frequencies_;
  bool declared_independent_ = true;
  double exponent_ = 0.0;
  std::vector<double> shifts_;
};

/// amplitude * cos(2 pi omega(k) . y + phase).
struct TrigTerm {
  std::vector<int> k;
  double amplitude = 0.0;
  double phase = 0.0;
  bool operator==(const TrigTerm&) const = default;
};

struct TrigPolynomial {
  std::vector<TrigTerm> terms;
  bool operator==(const TrigPolynomial&) const = default;
};

/// Samples on a regular grid over the periodic cell, row-major, node i of
/// axis d at y_d = i * period_d / shape[d].
struct GridSample {
  std::vector<int> shape;
  std::vector<double> values;
  int order = 1;  // 1: multilinear, 3: Catmull-Rom cubic
  bool operator==(const GridSample&) const = default;
};

/// Tensor of constant values; `breaks[d]` are the interior cut points of axis d.
struct PiecewiseConstant {
  std::vector<std::vector<double>> breaks;
  std::vector<double> values;
  bool operator==(const PiecewiseConstant&) const = default;
};

/// coefficient * prod_j cos(|z + shifts_j|^alpha).
struct SlowTerm {
  double coefficient = 1.0;
  std::vector<double> shifts;
  bool operator==(const SlowTerm&) const = default;
};

struct SlowOscillation {
  double constant = 0.0;
  std::vector<SlowTerm> terms;
  bool operator==(const SlowOscillation&) const = default;
};

using Generator = std::variant<TrigPolynomial, GridSample, PiecewiseConstant, SlowOscillation>;

/// A function on the cell, optionally multiplied by a factor on a time cell
/// (product-algebra structure). Evaluation is f(y + offset) * h(tau).
class OscillatoryField {
 public:
  OscillatoryField(CellGeometry geometry, Generator generator);

  static OscillatoryField constant(double value, CellGeometry geometry = CellGeometry::periodic(1));
  static OscillatoryField trig(CellGeometry geometry, std::vector<TrigTerm> terms);

  const CellGeometry& geometry() const { return geometry_; }
  const Generator& generator() const { return generator_; }
  const std::vector<double>& offset() const { return offset_; }
  const OscillatoryField* time_factor() const { return time_factor_.get(); }

  OscillatoryField with_time_factor(OscillatoryField factor) const;
  OscillatoryField with_offset(std::vector<double> offset) const;

  double operator()(std::span<const double> y) const;
  double operator()(std::span<const double> y, double tau) const;
  double operator()(double y) const;

  /// Largest physical frequency magnitude (periodic/quasiperiodic), or the
  /// reciprocal grid spacing for sampled generators.
  double resolution_frequency() const;

  bool operator==(const OscillatoryField& other) const;

 private:
  double spatial(std::span<const double> y) const;

  CellGeometry geometry_;
  Generator generator_;
  std::vector<double> offset_;
  std::shared_ptr<const OscillatoryField> time_factor_;
};

enum class MeanMethod { Exact, CellQuadrature, ExpandingWindow };

std::string to_string(MeanMethod method);
MeanMethod mean_method_from_string(const std::string& name);

/// Expanding-window schedule r_k = r0 * 2^k, k = 0..levels. Non-positive r0
/// selects the geometry default.
struct WindowSchedule {
  double r0 = 0.0;
  int levels = -1;
  double points_per_wavelength = 8.0;
  double max_points = 4e8;
};

struct MeanParams {
  WindowSchedule window;
  int cell_panels_per_wavelength = 8;
  int min_cell_panels = 64;
};

struct MeanValueEstimate {
  double value = 0.0;
  MeanMethod method = MeanMethod::Exact;
  std::vector<double> radii;
  std::vector<double> window_values;
  double error = 0.0;
  bool divergent = false;
};

/// Default expanding-window schedule for a geometry.
WindowSchedule default_schedule(const CellGeometry& geometry);

using CellMap = std::function<double(std::span<const double>)>;

double evaluate(const OscillatoryField& field, std::span<const double> y);
double evaluate(const OscillatoryField& field, std::span<const double> y, double tau);

MeanValueEstimate mean_value(const OscillatoryField& field, MeanMethod method, const MeanParams& params = {});

/// [M(|f|^p)]^{1/p}.
MeanValueEstimate besicovitch_seminorm(const OscillatoryField& field, double p, MeanMethod method,
                                       const MeanParams& params = {});

/// The field representing the cell derivative along coordinate `axis`.
OscillatoryField cell_derivative(const OscillatoryField& field, int axis);

/// f(. + a).
OscillatoryField translate(const OscillatoryField& field, std::span<const double> shift);

/// Pointwise product, closed for trigonometric polynomials on a common
/// geometry and for slow-oscillation generators.
OscillatoryField product(const OscillatoryField& lhs, const OscillatoryField& rhs);

/// Gaussian-weighted window averages of an arbitrary function of the cell
/// variable, extrapolated as for `mean_value`. `wavelength(y)` bounds the
/// local oscillation length used to size the quadrature.
MeanValueEstimate expanding_window_mean(const CellMap& f, int dimension,
                                        const std::function<double(std::span<const double>)>& wavelength,
                                        const WindowSchedule& schedule);

/// Mean of an arbitrary function of a field value over the field's cell:
/// M(g(f)). Periodic and quasiperiodic geometries use cell quadrature; the
/// slow-oscillation geometry uses expanding windows.
MeanValueEstimate mean_of_composition(const OscillatoryField& field, const std::function<double(double)>& g,
                                      const MeanParams& params = {});

/// Sup of |f| over a regular probe grid with `per_axis` points per axis
/// (window [-per_axis, per_axis] for the slow-oscillation geometry).
double probe_sup(const OscillatoryField& field, int per_axis = 64);

}  // namespace homog::fields
