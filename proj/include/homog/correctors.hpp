#pragma once

// Cell problems for the monotone operator a(y,tau) lambda + b(y,tau)|lambda|^{p-2} lambda
// on a periodic cell, effective flux tables, and homogenized convex densities.

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "homog/discrete.hpp"
#include "homog/macro_functions.hpp"
#include "homog/oscillator_fields.hpp"

namespace homog::correctors {

using fields::OscillatoryField;

/// Scalar mode: unknown u in R, gradients in R^N. Vector mode (N = 2):
/// divergence-free u in R^2, gradients flattened as (d0u0, d1u0, d0u1, d1u1).
enum class Mode { Scalar, Vector };

struct MonotoneCellOperator {
  Mode mode = Mode::Scalar;
  int dimension = 1;
  /// Symmetric N x N tensor field (row-major) or a single scalar field times
  /// the identity. Absent disables the linear part.
  std::optional<std::vector<OscillatoryField>> a;
  /// Absent disables the power part.
  std::optional<OscillatoryField> b;
  double p = 3.0;
  double nu0 = 0.0;  // coercivity of a
  double c1 = 0.0;   // c1 <= b <= 1/c1
  int probe_points = 32;

  int components() const { return mode == Mode::Scalar ? dimension : dimension * dimension; }
  const fields::CellGeometry& geometry() const;
  /// Period of the time cell when any coefficient carries a time factor.
  std::optional<double> time_period() const;
  /// Element tensor (r x r, row-major) at (y, tau) in gradient ordering.
  std::vector<double> tensor(std::span<const double> y, double tau) const;
  double power_coefficient(std::span<const double> y, double tau) const;
  bool constant_coefficients() const;

  /// Probe checks: symmetry and coercivity of a, bounds of b, p >= 3.
  /// Throws InvalidOperator.
  void validate() const;
};

struct CellOptions {
  int grid = 64;
  double tolerance = 1e-10;
  int tau_points = 8;
  discrete::NewtonOptions newton{};
  /// Scale of the initial corrector perturbation (0: start from zero).
  double initial_perturbation = 0.0;
  std::uint64_t seed = 1;
};

struct CellSlice {
  double tau = 0.0;
  std::vector<double> corrector;  // nodal (scalar) or face values (vector), zero mean
  std::vector<double> m_xi, M_xi;
  double residual = 0.0;
  int iterations = 0;
};

struct CellSolution {
  Mode mode = Mode::Scalar;
  int dimension = 1;
  int grid = 0;
  std::vector<double> periods;
  std::vector<double> xi;
  std::vector<CellSlice> slices;
  std::vector<double> m_xi;  // <a (xi + d pi)>
  std::vector<double> M_xi;  // <b |xi + d pi|^{p-2} (xi + d pi)>
  std::vector<double> flux;  // m_xi + M_xi
  double energy = 0.0;       // <1/2 a G.G + b/p |G|^p>
  double residual = 0.0;     // worst slice, unregularized, dual norm
  int iterations = 0;
  double max_divergence = 0.0;
};

CellSolution solve_cell_problem(const MonotoneCellOperator& op, std::span<const double> xi,
                                const CellOptions& opts = {});

/// One-dimensional scalar oracle from flux constancy: a s + b|s|^{p-2}s = c
/// pointwise with <s> = xi. `nodes` sets the corrector sampling.
CellSolution solve_cell_1d_closed_form(const MonotoneCellOperator& op, double xi, int nodes = 256,
                                       int tau_points = 8);

/// Effective flux, either closed form T xi + beta |xi|^{p-2} xi or a
/// multilinear table over a tensor grid of xi samples.
class EffectiveModel {
 public:
  enum class Kind { Closed, Table };

  static EffectiveModel closed(int r, std::vector<double> T, double beta, double p);
  /// `axes[i]` lists the samples of component i; a single sample 0 marks an
  /// inactive component. `m` and `M` hold r values per grid point (last axis
  /// fastest).
  static EffectiveModel table(std::vector<std::vector<double>> axes, std::vector<double> m, std::vector<double> M);

  Kind kind() const { return kind_; }
  int components() const { return r_; }
  const std::vector<double>& tensor() const { return T_; }
  double beta() const { return beta_; }
  double p() const { return p_; }
  const std::vector<std::vector<double>>& axes() const { return axes_; }
  const std::vector<double>& m_values() const { return m_; }
  const std::vector<double>& M_values() const { return M_; }
  std::size_t points() const;

  /// Throws RangeError outside the table.
  void split(const double* xi, double* m, double* M) const;
  void flux(const double* xi, double* F) const;
  void jacobian(const double* xi, double* J) const;  // column-major r x r
  bool has_energy() const { return kind_ == Kind::Closed; }
  double energy(const double* xi) const;

  /// min over tabulated pairs of (A(xi) - A(eta)).(xi - eta), and |A(0)|.
  double monotonicity_gap() const;
  double flux_at_zero() const;

  nlohmann::json to_json() const;
  static EffectiveModel from_json(const nlohmann::json& doc, const std::string& path = "");

 private:
  Kind kind_ = Kind::Closed;
  int r_ = 1;
  std::vector<double> T_;
  double beta_ = 0.0, p_ = 2.0;
  std::vector<std::vector<double>> axes_;
  std::vector<double> m_, M_;
};

/// Default xi table: 9 points on [-2, 2] per active component.
std::vector<std::vector<double>> default_axes(int components, std::span<const int> active = {});

EffectiveModel effective_coefficients(const MonotoneCellOperator& op, const std::vector<std::vector<double>>& axes,
                                      const CellOptions& opts = {}, int threads = 1);

/// Exact closed model: constant coefficients give T = a, beta = b; a linear
/// operator (no power part) gives T from unit-xi cell solves.
EffectiveModel closed_effective_model(const MonotoneCellOperator& op, const CellOptions& opts = {});

/// Discrete material evaluating w_e * phi_hom(G) for a homogenized model.
class HomogenizedMaterial : public discrete::Material {
 public:
  HomogenizedMaterial(const EffectiveModel& model, std::vector<double> weights);
  int components() const override { return model_.components(); }
  bool has_energy() const override { return model_.has_energy(); }
  bool quadratic() const override { return model_.kind() == EffectiveModel::Kind::Closed && model_.beta() == 0.0; }
  double energy(std::size_t e, const double* G) const override;
  void flux(std::size_t e, const double* G, double* F) const override;
  void jacobian(std::size_t e, const double* G, double* J, double delta) const override;

 private:
  const EffectiveModel& model_;
  std::vector<double> weights_;
};

/// f(x, y, lambda) = w(x) [1/2 a(y)|lambda|^2 + b(y)/p |lambda|^p].
struct ConvexDensity {
  int dimension = 1;
  macro::MacroFunction weight = macro::MacroFunction::constant(1, 1.0);
  std::optional<OscillatoryField> a;
  std::optional<OscillatoryField> b;
  double p = 2.0;

  double operator()(std::span<const double> x, std::span<const double> y, std::span<const double> lambda) const;
  const fields::CellGeometry& geometry() const;
  /// Strict convexity probe; throws InvalidOperator.
  void validate(int probes = 64) const;
  /// The y-part as a scalar-mode cell operator.
  MonotoneCellOperator cell_operator() const;
};

struct DensityValue {
  double value = 0.0;
  std::vector<double> corrector;
  std::vector<double> flux;
  double error = 0.0;  // mean-value error estimate (slow cells) or cell residual
};

/// f_hom(x, xi) = inf over zero-mean w of <f(x, ., xi + dw)>.
DensityValue homogenized_density(const ConvexDensity& f, std::span<const double> x, std::span<const double> xi,
                                 const CellOptions& opts = {});

/// Cell-average energy <f(x, ., xi + d w)> of an arbitrary nodal corrector
/// on the periodic grid used by `homogenized_density`.
double density_energy(const ConvexDensity& f, std::span<const double> x, std::span<const double> xi,
                      const std::vector<double>& corrector, int grid);

/// JSON header plus a binary sidecar of the corrector grids (dimensions
/// header, then little-endian float64 data).
nlohmann::json cell_solution_to_json(const CellSolution& sol, const std::filesystem::path& sidecar,
                                     const std::filesystem::path& base_dir);
std::vector<double> read_grid_sidecar(const std::filesystem::path& file, std::vector<std::uint64_t>& dims);
void write_grid_sidecar(const std::filesystem::path& file, const std::vector<std::uint64_t>& dims,
                        const std::vector<double>& values);

}  // namespace homog::correctors
