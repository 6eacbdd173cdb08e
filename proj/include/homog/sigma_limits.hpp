#pragma once

// Numerical checks of weak/strong Sigma-convergence on constructed sequences:
// oscillatory integrals at scale epsilon against the predicted double
// integrals over Q x cell.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "homog/macro_functions.hpp"

namespace homog::sigma {

using macro::MacroFunction;
using macro::SeparableField;

/// Axis-aligned box Q of spatial dimension d <= 2, optionally times (0, T).
/// Macroscopic points are X = (x_1..x_d[, t]).
struct MacroDomain {
  std::vector<double> lo{0.0};
  std::vector<double> hi{1.0};
  std::optional<double> horizon;

  int spatial_dimension() const { return static_cast<int>(lo.size()); }
  int macro_dimension() const { return spatial_dimension() + (horizon ? 1 : 0); }
  double volume() const;
  void validate() const;
};

/// eps_i(eps) = scale * eps^power.
struct Coupling {
  double scale = 1.0;
  double power = 1.0;
  double operator()(double eps) const;
};

/// Law of the random amplitude A(omega).
struct AmplitudeLaw {
  enum class Kind { Fixed, Uniform, Normal } kind = Kind::Fixed;
  double a = 1.0;  // fixed value, uniform lower bound, or normal mean
  double b = 1.0;  // uniform upper bound or normal standard deviation
  double mean() const;
  double variance() const;
  std::vector<double> sample(std::size_t n, std::uint64_t seed) const;
};

/// coefficient * eps^eps_power * [A] * S(X, x/eps1, t/eps2).
struct SequenceTerm {
  double coefficient = 1.0;
  double eps_power = 0.0;
  SeparableField field;
  bool random = false;
};

class OscillatorySequence {
 public:
  OscillatorySequence(MacroDomain domain, std::vector<SequenceTerm> terms, AmplitudeLaw law = {},
                      Coupling eps1 = {}, Coupling eps2 = {});

  /// u_eps(X) = v(X, x/eps, t/eps).
  static OscillatorySequence pure_oscillation(const MacroDomain& domain, const SeparableField& v);
  /// u_eps = u0 + eps * [A] * u1(X, x/eps, t/eps).
  static OscillatorySequence two_scale_expansion(const MacroDomain& domain, const SeparableField& u0,
                                                 const SeparableField& u1, const AmplitudeLaw& law = {},
                                                 bool random_corrector = false);

  const MacroDomain& domain() const { return domain_; }
  const std::vector<SequenceTerm>& terms() const { return terms_; }
  const AmplitudeLaw& law() const { return law_; }
  const Coupling& eps1() const { return eps1_; }
  const Coupling& eps2() const { return eps2_; }
  bool is_random() const;
  const fields::CellGeometry& geometry() const;

  double operator()(std::span<const double> X, double eps, double amplitude = 1.0) const;
  /// Deterministic and amplitude-multiplied parts separately.
  std::pair<double, double> split(std::span<const double> X, double eps) const;

  /// d/dx_axis of the sequence by the chain rule (exact on the representation).
  OscillatorySequence gradient(int axis) const;
  /// Largest cell and macro frequencies, for mesh sizing.
  double cell_frequency() const;
  double time_cell_frequency() const;
  double macro_frequency() const;

 private:
  MacroDomain domain_;
  std::vector<SequenceTerm> terms_;
  AmplitudeLaw law_;
  Coupling eps1_, eps2_;
  fields::CellGeometry fallback_;
};

/// Pair (u0, u1) with u1 of zero cell mean, or an arbitrary evaluable
/// function of (X, y, tau) (e.g. a histogram barycenter).
class TwoScaleFunction {
 public:
  using Evaluator = std::function<double(std::span<const double> X, std::span<const double> y, double tau)>;

  TwoScaleFunction(MacroDomain domain, SeparableField u0, SeparableField u1 = {});
  TwoScaleFunction(MacroDomain domain, fields::CellGeometry geometry, Evaluator u0);

  const MacroDomain& domain() const { return domain_; }
  const fields::CellGeometry& geometry() const { return geometry_; }
  bool separable() const { return !evaluator_; }
  const SeparableField& u0() const { return u0_; }
  const SeparableField& u1() const { return u1_; }

  double operator()(std::span<const double> X, std::span<const double> y, double tau = 0.0) const;
  /// u0(X) + eps u1(X, x/eps, t/eps).
  double reconstruct(std::span<const double> X, double eps) const;
  OscillatorySequence reconstruction(const AmplitudeLaw& law = {}, bool random_corrector = false) const;

 private:
  MacroDomain domain_;
  fields::CellGeometry geometry_;
  SeparableField u0_, u1_;
  Evaluator evaluator_;
};

struct CheckOptions {
  std::vector<double> epsilons{0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625};
  double tolerance = 1e-3;
  int points_per_period = 8;
  double max_points = 2e8;
  std::size_t mc_samples = 10000;
  std::uint64_t seed = 1;
  double noise_floor = 1e-11;
  int threads = 1;
};

struct SigmaLimitReport {
  std::string label;
  std::vector<double> epsilons;
  std::vector<double> values;
  double limit = 0.0;
  std::vector<double> errors;
  double rate = 0.0;  // NaN when fewer than two errors exceed the noise floor
  double tolerance = 0.0;
  double mc_sigma = 0.0;
  bool pass = false;
};

struct SigmaCheck {
  std::string kind;
  std::vector<SigmaLimitReport> reports;
  bool pass = false;
};

/// Fills errors, rate and pass from values/limit/tolerance. The last two
/// errors must not grow by more than noise_floor + 3 mc_sigma.
void finalize(SigmaLimitReport& report, double noise_floor = 1e-11);

/// int_Q u_eps(X) f(X, x/eps1, t/eps2) dX by composite Gauss-Legendre with
/// at least `points_per_period` panels per oscillation.
double oscillatory_integral(const OscillatorySequence& seq, double eps, const SeparableField& test,
                            const CheckOptions& opts = {}, double amplitude = 1.0);
/// int_Q int_cell u0 f.
double sigma_limit_value(const TwoScaleFunction& u, const SeparableField& test, const CheckOptions& opts = {});
/// (int_Q int_cell |u0|^p)^{1/p}.
double limit_norm(const TwoScaleFunction& u, double p, const CheckOptions& opts = {});
/// (int_Q |u_eps|^p)^{1/p}.
double sequence_norm(const OscillatorySequence& seq, double eps, double p, const CheckOptions& opts = {});

bool is_macro_only(const SeparableField& f);

SigmaCheck check_weak_sigma(const OscillatorySequence& seq, const TwoScaleFunction& limit,
                            const std::vector<SeparableField>& tests, const CheckOptions& opts = {});
SigmaCheck check_strong_sigma(const OscillatorySequence& seq, const TwoScaleFunction& limit, double p,
                              const std::vector<SeparableField>& tests, const CheckOptions& opts = {});

struct Exponents {
  double p = 2.0;  // weak factor
  double q = 2.0;  // strong factor
};
SigmaCheck check_product(const OscillatorySequence& u, const TwoScaleFunction& u_limit, const OscillatorySequence& v,
                         const TwoScaleFunction& v_limit, const std::vector<SeparableField>& tests,
                         const Exponents& exponents, const CheckOptions& opts = {});

/// Gradient of u0 + eps [A] u1 against the predicted Du0 + E[A] D_y u1, per
/// spatial axis and test field.
SigmaCheck check_gradient_decomposition(const TwoScaleFunction& u, const std::vector<SeparableField>& tests,
                                        const CheckOptions& opts = {}, const AmplitudeLaw& law = {},
                                        bool random_corrector = false);

using Flux = std::function<double(std::span<const double> X, std::span<const double> y, double lambda)>;

struct FluxReport {
  SigmaLimitReport pairing;  // values: int a(., v_eps) v_eps; limit: int int a(., v0) v0
  bool liminf_holds = false;
  double unfolding_error = 0.0;  // max cell-grid deviation of a^eps(., v_eps) from a(., v0)
  bool pass = false;
};

/// Inequality of the monotone-flux theorem plus equality and unfolding checks
/// for strongly convergent v_eps.
FluxReport check_flux_liminf(const Flux& a, const OscillatorySequence& v, const TwoScaleFunction& v0,
                             const CheckOptions& opts = {}, int cell_grid = 32);

}  // namespace homog::sigma
