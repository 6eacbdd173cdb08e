#pragma once

// Direct epsilon-scale solvers and their homogenized counterparts for convex
// minimization and for the (stochastic) monotone parabolic flow
//
//   du + (-div(a Du) - div(b |Du|^{p-2} Du) + B(u)) dt = f dt + g(u) dW,
//
// with coefficients evaluated at (x/eps, t/eps_time). Scalar mode works on
// Dirichlet intervals or rectangles without convection; vector mode works on
// a periodic square with divergence-free velocities and explicit convection.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "homog/correctors.hpp"
#include "homog/discrete.hpp"
#include "homog/macro_functions.hpp"
#include "homog/wiener.hpp"

namespace homog::solvers {

using correctors::EffectiveModel;
using correctors::MonotoneCellOperator;
using macro::MacroFunction;

struct Domain {
  std::vector<double> lo{0.0};
  std::vector<double> hi{1.0};
  std::vector<int> cells{64};

  int dimension() const { return static_cast<int>(lo.size()); }
  /// Largest cell width.
  double h() const;
  void validate() const;
};

/// g_k(x, y, tau, u) = (alpha_k(y, tau) + beta_k(y, tau) u) profile_k(x),
/// driven by the k-th Wiener component.
struct NoiseSpec {
  struct Mode {
    std::optional<fields::OscillatoryField> alpha;
    std::optional<fields::OscillatoryField> beta;
    MacroFunction profile = MacroFunction::constant(1, 1.0);
  };
  std::vector<Mode> modes;

  int dimension() const { return static_cast<int>(modes.size()); }
  bool zero() const;
  /// Cell means of alpha and beta (the homogenized noise).
  NoiseSpec averaged() const;
  /// Probe bound of |beta| * |profile| over the domain.
  double lipschitz(const Domain& domain) const;
};

enum class EvolutionMode { Scalar, Vector };

std::string to_string(EvolutionMode mode);

struct EvolutionConfig {
  EvolutionMode mode = EvolutionMode::Scalar;
  Domain domain;
  double T = 0.1;
  double dt = 0.0;  // 0: eps_time / 4
  double eps = 0.125;
  std::optional<double> eps_time;  // defaults to eps
  MonotoneCellOperator op;
  /// Initial value (scalar) or initial stream function psi with
  /// u = (d1 psi, -d0 psi) (vector).
  MacroFunction initial = MacroFunction::constant(1, 0.0);
  /// Empty (no forcing), one function (scalar) or two components (vector).
  std::vector<MacroFunction> forcing;
  NoiseSpec noise;
  discrete::NewtonOptions newton{};
  double blowup_cap = 1e6;
  bool convection = true;  // vector mode only
  bool check_resolution = true;

  double time_scale() const { return eps_time.value_or(eps); }
  double step() const { return dt > 0 ? dt : time_scale() / 4; }
  int steps() const;
};

/// Discrete trajectory with cached norms per stored time.
struct SolutionField {
  EvolutionMode mode = EvolutionMode::Scalar;
  std::shared_ptr<const discrete::Mesh> mesh;
  std::vector<double> times;
  std::vector<discrete::Vector> dofs;    // unknowns per time
  std::vector<discrete::Vector> states;  // nodal values or face velocities per time
  double p = 2.0;
  std::vector<double> l2, h1, vnorm;  // |u|_{L2}, |Du|_{L2}, |Du|_{L^p}
  double energy = 0.0;                // minimization problems only
  double residual = 0.0;              // worst step
  int newton_iterations = 0;          // total
  double max_divergence = 0.0;
  bool aborted = false;
  std::string abort_reason;

  const discrete::Vector& final_state() const { return states.back(); }
};

/// Norms of one stored time; `recompute_norms` refreshes the caches.
double l2_norm(const discrete::Mesh& mesh, const discrete::Vector& state);
void recompute_norms(SolutionField& field);
/// sqrt(sum_n dt_n |a_n - b_n|^2_{L2}) over stored times after the first.
double l2_qt_distance(const SolutionField& a, const SolutionField& b);
/// |a(T) - b(T)|_{L2}.
double final_l2_distance(const SolutionField& a, const SolutionField& b);

/// Physical coordinates of every state entry (nodes or faces).
std::vector<std::vector<double>> state_points(const EvolutionConfig& cfg, const discrete::Mesh& mesh);

// --- convex minimization -----------------------------------------------------

struct MinimizeProblem {
  Domain domain;
  MacroFunction load = MacroFunction::constant(1, 1.0);
  discrete::NewtonOptions newton{};
  bool check_resolution = true;
};

/// Discrete minimizer of int f(x, x/eps, Dv) - load.v over zero-boundary P1
/// functions.
SolutionField minimize_functional_eps(const correctors::ConvexDensity& f, double eps, const MinimizeProblem& problem);

/// Same with the density w(x) phi_hom(Dv) of an effective model.
SolutionField minimize_homogenized_functional(const EffectiveModel& model, const MacroFunction& weight,
                                              const MinimizeProblem& problem);

/// Effective model of the y-part of a density: closed form when quadratic
/// (including 1D slow-oscillation cells via the harmonic mean), else a table.
EffectiveModel density_model(const correctors::ConvexDensity& f, const correctors::CellOptions& opts = {});

// --- evolution ---------------------------------------------------------------

/// Requires g = 0. Implicit Euler with a damped Newton solve per step.
SolutionField solve_parabolic_eps(const EvolutionConfig& cfg);
SolutionField solve_parabolic_homogenized(const EffectiveModel& model, const EvolutionConfig& cfg);

/// Semi-implicit Euler-Maruyama: the implicit step is applied to
/// u^n + dt f + g(u^n) dW_n - dt B(u^n). With g = 0 the trajectory equals the
/// parabolic one bitwise.
SolutionField solve_spde_eps(const EvolutionConfig& cfg, const wiener::WienerPath& path);
/// Homogenized SPDE with the cell-averaged noise.
SolutionField solve_spde_homogenized(const EffectiveModel& model, const EvolutionConfig& cfg,
                                     const wiener::WienerPath& path);

/// Effective model for the operator of `cfg`: closed when the operator is
/// linear or constant, else a table over `axes` (default_axes when empty).
EffectiveModel evolution_model(const EvolutionConfig& cfg, const correctors::CellOptions& opts = {}, int threads = 1,
                               const std::vector<std::vector<double>>& axes = {});

// --- statistics and studies ---------------------------------------------------

struct AprioriStats {
  std::size_t samples = 0;
  double sup_l2sq = 0.0, sup_l2sq_se = 0.0;  // E sup_t |u|^2 and its standard error
  double int_h1sq = 0.0, int_h1sq_se = 0.0;  // E int |Du|^2 dt
  double int_vp = 0.0, int_vp_se = 0.0;      // E int |Du|_p^p dt
};

AprioriStats estimate_apriori_bounds(std::span<const SolutionField> ensemble);

/// Flat when (max - min) / max of E sup |u|^2 across levels is within
/// `tolerance` (all-zero statistics are flat).
struct TrendReport {
  double spread = 0.0;
  bool flat = true;
};
TrendReport apriori_trend(std::span<const AprioriStats> levels, double tolerance = 0.05);

struct StudyConfig {
  EvolutionConfig base;
  std::vector<double> eps_list{0.125, 0.0625, 0.03125, 0.015625};
  int trials = 1;
  bool stochastic = false;
  std::uint64_t seed = 1;
  int threads = 1;
  correctors::CellOptions cell{};
  std::optional<EffectiveModel> model;
};

struct StudyRow {
  double eps = 0.0;
  int trial = 0;
  double error = 0.0;  // |u_eps - u_0|_{L2(Q_T)}
  double sup_l2sq = 0.0, int_h1sq = 0.0, int_vp = 0.0;
  double max_divergence = 0.0;
};

struct StudyLevel {
  double eps = 0.0;
  double median = 0.0, upper_quartile = 0.0, mean = 0.0;
  AprioriStats stats;
};

struct StudyReport {
  std::vector<StudyRow> rows;  // ordered by (eps index, trial)
  std::vector<StudyLevel> levels;
  AprioriStats homogenized;
  double rate = 0.0;  // least-squares slope of log median against log eps
  bool monotone = false;
  double dt = 0.0;
  nlohmann::json model;
};

/// All epsilon levels share one mesh (resolving the smallest eps) and one time
/// grid; trial k uses the Wiener path seeded with seed + k for every level and
/// for the homogenized solve.
StudyReport convergence_study(const StudyConfig& cfg);

/// Percentile of a sample by linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

}  // namespace homog::solvers
