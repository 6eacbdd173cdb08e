#include "homog/sigma_limits.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "homog/error.hpp"
#include "homog/parallel.hpp"
#include "homog/quadrature.hpp"

namespace homog::sigma {

using fields::CellGeometry;
using fields::CellKind;
using fields::OscillatoryField;

namespace {

struct Axis {
  std::vector<double> x;
  std::vector<double> w;
};

Axis gl_axis(double a, double b, std::size_t panels) {
  const auto& r = quad::gauss_legendre4();
  Axis axis;
  const double h = (b - a) / static_cast<double>(panels);
  for (std::size_t k = 0; k < panels; ++k) {
    const double mid = a + (static_cast<double>(k) + 0.5) * h;
    for (int q = 0; q < 4; ++q) {
      axis.x.push_back(mid + 0.5 * h * r.nodes[q]);
      axis.w.push_back(0.5 * h * r.weights[q]);
    }
  }
  return axis;
}

void check_budget(const std::vector<Axis>& axes, double max_points) {
  double n = 1.0;
  for (const auto& a : axes) n *= static_cast<double>(a.x.size());
  if (n > max_points)
    throw BudgetError("quadrature mesh would need " + std::to_string(n) + " points (cap " + std::to_string(max_points) +
                      ")");
}

/// Tensor sum of f(point) * weight; `f` may accumulate several integrals.
template <class F>
void tensor_sweep(const std::vector<Axis>& axes, F&& f) {
  const std::size_t dim = axes.size();
  std::vector<std::size_t> idx(dim, 0);
  std::vector<double> point(dim);
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.x.size();
  for (std::size_t c = 0; c < total; ++c) {
    double w = 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
      point[d] = axes[d].x[idx[d]];
      w *= axes[d].w[idx[d]];
    }
    f(std::span<const double>(point), w);
    for (std::size_t d = dim; d-- > 0;) {
      if (++idx[d] < axes[d].x.size()) break;
      idx[d] = 0;
    }
  }
}

double field_frequency(const OscillatoryField& f) {
  return f.geometry().kind() == CellKind::SlowOscillation ? 1.0 : f.resolution_frequency();
}

double time_frequency(const OscillatoryField& f) {
  return f.time_factor() ? field_frequency(*f.time_factor()) : 0.0;
}

double macro_freq(const MacroFunction& g) {
  double best = 0.0;
  for (const auto& t : g.terms())
    for (double k : t.k) best = std::max(best, std::abs(k));
  return best;
}

int max_power(const MacroFunction& g) {
  int best = 0;
  for (const auto& t : g.terms()) {
    int s = 0;
    for (int p : t.powers) s += p;
    best = std::max(best, s);
  }
  return best;
}

std::optional<double> constant_value(const OscillatoryField& f) {
  if (f.time_factor()) return std::nullopt;
  if (const auto* tp = std::get_if<fields::TrigPolynomial>(&f.generator())) {
    double v = 0.0;
    for (const auto& t : tp->terms) {
      if (std::any_of(t.k.begin(), t.k.end(), [](int k) { return k != 0; })) return std::nullopt;
      v += t.amplitude * std::cos(t.phase);
    }
    return v;
  }
  if (const auto* s = std::get_if<fields::SlowOscillation>(&f.generator()); s && s->terms.empty()) return s->constant;
  return std::nullopt;
}

/// Re-homes y-independent terms of a test field onto `geometry`.
SeparableField adapt(const SeparableField& test, const CellGeometry& geometry) {
  std::vector<SeparableField::Term> out;
  for (const auto& t : test.terms()) {
    if (const auto c = constant_value(t.cell))
      out.push_back({t.macro.scaled(*c), OscillatoryField::constant(1.0, geometry)});
    else
      out.push_back(t);
  }
  return SeparableField(out);
}

/// Composite GL axes over the macro box, resolving scale eps.
std::vector<Axis> eps_mesh(const MacroDomain& dom, double eps1, double eps2, double cell_freq, double tau_freq,
                           double macro_f, const CheckOptions& opts) {
  const double q = opts.points_per_period;
  std::vector<Axis> axes;
  auto width_for = [&](double len, double cell_scale, double freq) {
    double w = len / 16.0;
    if (freq > 0.0) w = std::min(w, cell_scale / (q * freq));
    if (macro_f > 0.0) w = std::min(w, 1.0 / (q * macro_f));
    return w;
  };
  for (int d = 0; d < dom.spatial_dimension(); ++d) {
    const double len = dom.hi[d] - dom.lo[d];
    axes.push_back(gl_axis(dom.lo[d], dom.hi[d], quad::panels_for(len, width_for(len, eps1, cell_freq))));
  }
  if (dom.horizon) {
    const double T = *dom.horizon;
    axes.push_back(gl_axis(0.0, T, quad::panels_for(T, width_for(T, eps2, tau_freq))));
  }
  check_budget(axes, opts.max_points);
  return axes;
}

/// Axes for smooth macro integrands.
std::vector<Axis> macro_mesh(const MacroDomain& dom, double macro_f, int panels_min = 16) {
  std::vector<Axis> axes;
  auto add = [&](double a, double b) {
    std::size_t panels = static_cast<std::size_t>(panels_min);
    if (macro_f > 0.0) panels = std::max(panels, quad::panels_for(b - a, 1.0 / (8.0 * macro_f)));
    axes.push_back(gl_axis(a, b, panels));
  };
  for (int d = 0; d < dom.spatial_dimension(); ++d) add(dom.lo[d], dom.hi[d]);
  if (dom.horizon) add(0.0, *dom.horizon);
  return axes;
}

double integrate_macro(const MacroDomain& dom, const MacroFunction& g) {
  if (g.is_zero()) return 0.0;
  // Polynomial parts are integrated exactly by GL4 once panels are fine enough.
  const int panels = std::max(16, max_power(g));
  double total = 0.0;
  tensor_sweep(macro_mesh(dom, macro_freq(g), panels), [&](std::span<const double> X, double w) { total += w * g(X); });
  return total;
}

/// Quadrature over Q x cell (x time cell); periodic cells only.
template <class F>
double integrate_q_cell(const MacroDomain& dom, const CellGeometry& geo, const OscillatoryField* tau_hint, double freq,
                        double tau_freq, double macro_f, const CheckOptions& opts, F&& f) {
  if (geo.kind() != CellKind::PeriodicTorus)
    throw UnsupportedOperation("Q x cell quadrature needs a periodic cell; use separable limits for other geometries");
  std::vector<Axis> axes = macro_mesh(dom, macro_f, 8);
  const int nd = dom.macro_dimension();
  double volume = 1.0;
  for (int d = 0; d < geo.dimension(); ++d) {
    const double P = geo.periods()[d];
    axes.push_back(gl_axis(0.0, P, std::max<std::size_t>(32, quad::panels_for(P, 1.0 / (8.0 * std::max(freq, 1e-300))))));
    volume *= P;
  }
  const bool time = dom.horizon && tau_hint;
  if (time) {
    if (tau_hint->geometry().kind() != CellKind::PeriodicTorus)
      throw UnsupportedOperation("time cell quadrature needs a periodic time factor");
    const double P = tau_hint->geometry().periods()[0];
    axes.push_back(gl_axis(0.0, P, std::max<std::size_t>(32, quad::panels_for(P, 1.0 / (8.0 * std::max(tau_freq, 1e-300))))));
    volume *= P;
  }
  check_budget(axes, opts.max_points);
  double total = 0.0;
  const std::size_t ny = static_cast<std::size_t>(geo.dimension());
  tensor_sweep(axes, [&](std::span<const double> p, double w) {
    const auto X = p.first(static_cast<std::size_t>(nd));
    const auto y = p.subspan(static_cast<std::size_t>(nd), ny);
    const double tau = time ? p.back() : 0.0;
    total += w * f(X, y, tau);
  });
  return total / volume;
}

const OscillatoryField* first_time_factor(const SeparableField& s) {
  for (const auto& t : s.terms())
    if (t.cell.time_factor()) return t.cell.time_factor();
  return nullptr;
}

double sep_frequency(const SeparableField& s) {
  double f = 0.0;
  for (const auto& t : s.terms()) f = std::max(f, field_frequency(t.cell));
  return f;
}

double sep_time_frequency(const SeparableField& s) {
  double f = 0.0;
  for (const auto& t : s.terms()) f = std::max(f, time_frequency(t.cell));
  return f;
}

double sep_macro_frequency(const SeparableField& s) {
  double f = 0.0;
  for (const auto& t : s.terms()) f = std::max(f, macro_freq(t.macro));
  return f;
}

/// Integrals of (deterministic, random) parts of u_eps times the test field.
std::pair<double, double> integrate_split(const OscillatorySequence& seq, double eps, const SeparableField& test,
                                          const CheckOptions& opts) {
  const SeparableField f = test.empty() ? test : adapt(test, seq.geometry());
  const double e1 = seq.eps1()(eps), e2 = seq.eps2()(eps);
  const auto axes =
      eps_mesh(seq.domain(), e1, e2, std::max(seq.cell_frequency(), sep_frequency(f)),
               std::max(seq.time_cell_frequency(), sep_time_frequency(f)),
               std::max(seq.macro_frequency(), sep_macro_frequency(f)), opts);
  const int d = seq.domain().spatial_dimension();
  const bool time = seq.domain().horizon.has_value();
  std::vector<double> y(static_cast<std::size_t>(d));
  double det = 0.0, rnd = 0.0;
  tensor_sweep(axes, [&](std::span<const double> X, double w) {
    const auto [a, b] = seq.split(X, eps);
    double fv = 1.0;
    if (!f.empty()) {
      for (int i = 0; i < d; ++i) y[i] = X[i] / e1;
      fv = f(X, y, time ? X.back() / e2 : 0.0);
    }
    det += w * a * fv;
    rnd += w * b * fv;
  });
  return {det, rnd};
}

double macro_integral(const MacroDomain& dom, const MacroFunction& g) { return integrate_macro(dom, g); }

SigmaLimitReport run_pairing(const std::string& label, const OscillatorySequence& seq, double limit,
                             const SeparableField& test, const CheckOptions& opts) {
  SigmaLimitReport rep;
  rep.label = label;
  rep.epsilons = opts.epsilons;
  rep.limit = limit;
  rep.values.assign(opts.epsilons.size(), 0.0);
  std::vector<double> sigmas(opts.epsilons.size(), 0.0);
  std::vector<double> samples;
  if (seq.is_random()) samples = seq.law().sample(opts.mc_samples, opts.seed);
  double mean_a = 0.0, sd_a = 0.0;
  if (!samples.empty()) {
    for (double a : samples) mean_a += a;
    mean_a /= static_cast<double>(samples.size());
    for (double a : samples) sd_a += (a - mean_a) * (a - mean_a);
    sd_a = std::sqrt(sd_a / static_cast<double>(samples.size() - 1));
  }
  parallel_for(opts.epsilons.size(), opts.threads, [&](std::size_t i) {
    const auto [det, rnd] = integrate_split(seq, opts.epsilons[i], test, opts);
    if (samples.empty()) {
      rep.values[i] = det + rnd;
    } else {
      // Sample average of det + A_s * rnd over the Monte-Carlo amplitudes.
      double acc = 0.0;
      for (double a : samples) acc += det + a * rnd;
      rep.values[i] = acc / static_cast<double>(samples.size());
      sigmas[i] = std::abs(rnd) * sd_a / std::sqrt(static_cast<double>(samples.size()));
    }
  });
  rep.mc_sigma = sigmas.empty() ? 0.0 : *std::max_element(sigmas.begin(), sigmas.end());
  rep.tolerance = opts.tolerance + 3.0 * rep.mc_sigma;
  finalize(rep, opts.noise_floor);
  return rep;
}

std::string describe_test(std::size_t i, const SeparableField& f) {
  return "test " + std::to_string(i) + (is_macro_only(f) ? " (x-only)" : " (oscillating)");
}

SigmaCheck weak_reports(const OscillatorySequence& seq, const TwoScaleFunction& limit,
                        const std::vector<SeparableField>& tests, const CheckOptions& opts) {
  SigmaCheck check;
  check.kind = "weak";
  for (std::size_t i = 0; i < tests.size(); ++i)
    check.reports.push_back(
        run_pairing(describe_test(i, tests[i]), seq, sigma_limit_value(limit, tests[i], opts), tests[i], opts));
  check.pass = std::all_of(check.reports.begin(), check.reports.end(), [](const auto& r) { return r.pass; });
  return check;
}

void validate_catalog(const std::vector<SeparableField>& tests) {
  if (tests.size() < 3) throw UsageError("weak Sigma checks need at least three test fields");
  bool macro_only = false, oscillating = false;
  for (const auto& t : tests) (is_macro_only(t) ? macro_only : oscillating) = true;
  if (!macro_only || !oscillating)
    throw UsageError("test catalog needs at least one x-only and one oscillating test field");
}

}  // namespace

double MacroDomain::volume() const {
  double v = 1.0;
  for (std::size_t d = 0; d < lo.size(); ++d) v *= hi[d] - lo[d];
  if (horizon) v *= *horizon;
  return v;
}

void MacroDomain::validate() const {
  if (lo.empty() || lo.size() > 2 || lo.size() != hi.size()) throw UsageError("macro domain must be a box of dimension 1 or 2");
  for (std::size_t d = 0; d < lo.size(); ++d)
    if (!(hi[d] > lo[d])) throw UsageError("macro domain bounds must satisfy lo < hi");
  if (horizon && !(*horizon > 0.0)) throw UsageError("time horizon must be positive");
}

double Coupling::operator()(double eps) const { return scale * std::pow(eps, power); }

double AmplitudeLaw::mean() const {
  switch (kind) {
    case Kind::Fixed: return a;
    case Kind::Uniform: return 0.5 * (a + b);
    case Kind::Normal: return a;
  }
  return a;
}

double AmplitudeLaw::variance() const {
  switch (kind) {
    case Kind::Fixed: return 0.0;
    case Kind::Uniform: return (b - a) * (b - a) / 12.0;
    case Kind::Normal: return b * b;
  }
  return 0.0;
}

std::vector<double> AmplitudeLaw::sample(std::size_t n, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::vector<double> out(n, a);
  if (kind == Kind::Uniform) {
    std::uniform_real_distribution<double> u(a, b);
    for (auto& v : out) v = u(rng);
  } else if (kind == Kind::Normal) {
    std::normal_distribution<double> g(a, b);
    for (auto& v : out) v = g(rng);
  }
  return out;
}

OscillatorySequence::OscillatorySequence(MacroDomain domain, std::vector<SequenceTerm> terms, AmplitudeLaw law,
                                         Coupling eps1, Coupling eps2)
    : domain_(std::move(domain)), law_(law), eps1_(eps1), eps2_(eps2),
      fallback_(CellGeometry::periodic(std::max(1, static_cast<int>(domain_.lo.size())))) {
  domain_.validate();
  for (auto& t : terms) {
    if (t.field.empty() || t.coefficient == 0.0) continue;
    if (t.field.macro_dimension() != domain_.macro_dimension())
      throw UsageError("sequence term macro dimension does not match the domain");
    if (t.field.geometry().dimension() != domain_.spatial_dimension())
      throw UsageError("cell dimension must equal the spatial dimension");
    if (t.field.has_time_factor() && !domain_.horizon) throw UsageError("time-cell factor needs a time horizon");
    if (!terms_.empty() && !(t.field.geometry() == terms_.front().field.geometry()))
      throw GeometryMismatch("sequence terms live on different cells");
    terms_.push_back(std::move(t));
  }
}

OscillatorySequence OscillatorySequence::pure_oscillation(const MacroDomain& domain, const SeparableField& v) {
  return {domain, {{1.0, 0.0, v, false}}};
}

OscillatorySequence OscillatorySequence::two_scale_expansion(const MacroDomain& domain, const SeparableField& u0,
                                                             const SeparableField& u1, const AmplitudeLaw& law,
                                                             bool random_corrector) {
  return {domain, {{1.0, 0.0, u0, false}, {1.0, 1.0, u1, random_corrector}}, law};
}

bool OscillatorySequence::is_random() const {
  return law_.kind != AmplitudeLaw::Kind::Fixed &&
         std::any_of(terms_.begin(), terms_.end(), [](const auto& t) { return t.random; });
}

const CellGeometry& OscillatorySequence::geometry() const {
  return terms_.empty() ? fallback_ : terms_.front().field.geometry();
}

std::pair<double, double> OscillatorySequence::split(std::span<const double> X, double eps) const {
  const int d = domain_.spatial_dimension();
  double y[2] = {0.0, 0.0};
  const double e1 = eps1_(eps);
  for (int i = 0; i < d; ++i) y[i] = X[i] / e1;
  const double tau = domain_.horizon ? X.back() / eps2_(eps) : 0.0;
  double det = 0.0, rnd = 0.0;
  for (const auto& t : terms_) {
    const double v = t.coefficient * std::pow(eps, t.eps_power) *
                     t.field(X, std::span<const double>(y, static_cast<std::size_t>(d)), tau);
    (t.random ? rnd : det) += v;
  }
  return {det, rnd};
}

double OscillatorySequence::operator()(std::span<const double> X, double eps, double amplitude) const {
  const auto [det, rnd] = split(X, eps);
  return det + (law_.kind == AmplitudeLaw::Kind::Fixed ? law_.a : amplitude) * rnd;
}

OscillatorySequence OscillatorySequence::gradient(int axis) const {
  if (axis < 0 || axis >= domain_.spatial_dimension()) throw UsageError("gradient axis must be spatial");
  std::vector<SequenceTerm> out;
  for (const auto& t : terms_) {
    out.push_back({t.coefficient, t.eps_power, t.field.macro_derivative(axis), t.random});
    if (!is_macro_only(t.field))
      out.push_back({t.coefficient / eps1_.scale, t.eps_power - eps1_.power, t.field.cell_derivative(axis), t.random});
  }
  return {domain_, out, law_, eps1_, eps2_};
}

double OscillatorySequence::cell_frequency() const {
  double f = 0.0;
  for (const auto& t : terms_) f = std::max(f, sep_frequency(t.field));
  return f;
}

double OscillatorySequence::time_cell_frequency() const {
  double f = 0.0;
  for (const auto& t : terms_) f = std::max(f, sep_time_frequency(t.field));
  return f;
}

double OscillatorySequence::macro_frequency() const {
  double f = 0.0;
  for (const auto& t : terms_) f = std::max(f, sep_macro_frequency(t.field));
  return f;
}

TwoScaleFunction::TwoScaleFunction(MacroDomain domain, SeparableField u0, SeparableField u1)
    : domain_(std::move(domain)),
      geometry_(u0.empty() ? (u1.empty() ? CellGeometry::periodic(static_cast<int>(domain_.lo.size())) : u1.geometry())
                           : u0.geometry()),
      u0_(std::move(u0)),
      u1_(std::move(u1)) {
  domain_.validate();
  if (!u1_.empty()) {
    if (!(u1_.geometry() == geometry_)) u1_ = adapt(u1_, geometry_);
    for (const auto& t : u1_.terms())
      if (std::abs(macro::best_mean(t.cell)) > 1e-10)
        throw UsageError("corrector u1 must have zero cell mean in every term");
  }
}

TwoScaleFunction::TwoScaleFunction(MacroDomain domain, fields::CellGeometry geometry, Evaluator u0)
    : domain_(std::move(domain)), geometry_(std::move(geometry)), evaluator_(std::move(u0)) {
  domain_.validate();
}

double TwoScaleFunction::operator()(std::span<const double> X, std::span<const double> y, double tau) const {
  if (evaluator_) return evaluator_(X, y, tau);
  return u0_.empty() ? 0.0 : u0_(X, y, tau);
}

double TwoScaleFunction::reconstruct(std::span<const double> X, double eps) const {
  const int d = domain_.spatial_dimension();
  double y[2] = {0.0, 0.0};
  for (int i = 0; i < d; ++i) y[i] = X[i] / eps;
  const std::span<const double> ys(y, static_cast<std::size_t>(d));
  const double tau = domain_.horizon ? X.back() / eps : 0.0;
  double v = (*this)(X, ys, tau);
  if (!u1_.empty()) v += eps * u1_(X, ys, tau);
  return v;
}

OscillatorySequence TwoScaleFunction::reconstruction(const AmplitudeLaw& law, bool random_corrector) const {
  if (evaluator_) throw UnsupportedOperation("reconstruction needs a separable two-scale function");
  return OscillatorySequence::two_scale_expansion(domain_, u0_, u1_, law, random_corrector);
}

bool is_macro_only(const SeparableField& f) {
  return std::all_of(f.terms().begin(), f.terms().end(), [](const auto& t) { return constant_value(t.cell).has_value(); });
}

void finalize(SigmaLimitReport& r, double noise_floor) {
  const std::size_t n = r.values.size();
  r.errors.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.errors[i] = std::abs(r.values[i] - r.limit);
  for (std::size_t i = 1; i < r.epsilons.size(); ++i)
    if (!(r.epsilons[i] < r.epsilons[i - 1])) throw UsageError("epsilon list must be strictly decreasing");
  // Log-log least squares over errors above the noise floor.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (r.errors[i] <= noise_floor) continue;
    const double x = std::log(r.epsilons[i]), y = std::log(r.errors[i]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
    ++m;
  }
  r.rate = m >= 2 ? (m * sxy - sx * sy) / (m * sxx - sx * sx) : std::numeric_limits<double>::quiet_NaN();
  // Monte-Carlo reports decay only up to their sampling noise.
  const double slack = noise_floor + 3 * r.mc_sigma;
  bool monotone = true;
  for (std::size_t i = n >= 3 ? n - 2 : 1; i < n; ++i) monotone = monotone && r.errors[i] <= r.errors[i - 1] + slack;
  r.pass = n > 0 && r.errors.back() <= r.tolerance && monotone;
}

double oscillatory_integral(const OscillatorySequence& seq, double eps, const SeparableField& test,
                            const CheckOptions& opts, double amplitude) {
  const auto [det, rnd] = integrate_split(seq, eps, test, opts);
  const double a = seq.law().kind == AmplitudeLaw::Kind::Fixed ? seq.law().a : amplitude;
  return det + a * rnd;
}

double sigma_limit_value(const TwoScaleFunction& u, const SeparableField& test_in, const CheckOptions& opts) {
  const SeparableField test = adapt(test_in, u.geometry());
  if (u.separable()) {
    try {
      double total = 0.0;
      for (const auto& a : u.u0().terms())
        for (const auto& b : test.terms()) {
          double m;
          if (const auto c = constant_value(b.cell))
            m = *c * macro::best_mean(a.cell);
          else if (const auto c2 = constant_value(a.cell))
            m = *c2 * macro::best_mean(b.cell);
          else
            m = macro::best_mean(fields::product(a.cell, b.cell));
          if (m != 0.0) total += m * macro_integral(u.domain(), a.macro * b.macro);
        }
      return total;
    } catch (const UnsupportedOperation&) {
      // fall through to brute-force quadrature
    }
  }
  const OscillatoryField* tf = first_time_factor(test);
  if (!tf && u.separable()) tf = first_time_factor(u.u0());
  const double freq = std::max(sep_frequency(test), u.separable() ? sep_frequency(u.u0()) : 8.0);
  const double tfreq = std::max(sep_time_frequency(test), u.separable() ? sep_time_frequency(u.u0()) : 0.0);
  const double mfreq = std::max(sep_macro_frequency(test), u.separable() ? sep_macro_frequency(u.u0()) : 0.0);
  return integrate_q_cell(u.domain(), u.geometry(), tf, freq, tfreq, mfreq, opts,
                          [&](std::span<const double> X, std::span<const double> y, double tau) {
                            return u(X, y, tau) * (test.empty() ? 1.0 : test(X, y, tau));
                          });
}

double limit_norm(const TwoScaleFunction& u, double p, const CheckOptions& opts) {
  if (!(p >= 1.0)) throw UsageError("norm exponent must be >= 1");
  if (p == 2.0 && u.separable()) {
    try {
      return std::sqrt(std::max(0.0, sigma_limit_value(u, u.u0(), opts)));
    } catch (const UnsupportedOperation&) {
    }
  }
  const OscillatoryField* tf = u.separable() ? first_time_factor(u.u0()) : nullptr;
  const double freq = u.separable() ? sep_frequency(u.u0()) : 8.0;
  const double tfreq = u.separable() ? sep_time_frequency(u.u0()) : 0.0;
  const double mfreq = u.separable() ? sep_macro_frequency(u.u0()) : 0.0;
  const double v = integrate_q_cell(u.domain(), u.geometry(), tf, 4.0 * std::max(freq, 1.0), 4.0 * tfreq, mfreq, opts,
                                    [&](std::span<const double> X, std::span<const double> y, double tau) {
                                      return std::pow(std::abs(u(X, y, tau)), p);
                                    });
  return std::pow(v * u.domain().volume(), 1.0 / p);
}

double sequence_norm(const OscillatorySequence& seq, double eps, double p, const CheckOptions& opts) {
  if (seq.is_random()) throw UnsupportedOperation("norms of random-amplitude sequences are sample dependent");
  const double e1 = seq.eps1()(eps), e2 = seq.eps2()(eps);
  CheckOptions fine = opts;
  // |u|^p has harmonics up to p times the base frequency.
  const double boost = std::max(1.0, std::ceil(p));
  const auto axes = eps_mesh(seq.domain(), e1, e2, boost * seq.cell_frequency(), boost * seq.time_cell_frequency(),
                             boost * seq.macro_frequency(), fine);
  double total = 0.0;
  tensor_sweep(axes, [&](std::span<const double> X, double w) { total += w * std::pow(std::abs(seq(X, eps)), p); });
  return std::pow(total, 1.0 / p);
}

SigmaCheck check_weak_sigma(const OscillatorySequence& seq, const TwoScaleFunction& limit,
                            const std::vector<SeparableField>& tests, const CheckOptions& opts) {
  validate_catalog(tests);
  return weak_reports(seq, limit, tests, opts);
}

SigmaCheck check_strong_sigma(const OscillatorySequence& seq, const TwoScaleFunction& limit, double p,
                              const std::vector<SeparableField>& tests, const CheckOptions& opts) {
  SigmaCheck check = check_weak_sigma(seq, limit, tests, opts);
  check.kind = "strong";
  SigmaLimitReport norm;
  norm.label = "norm L^" + std::to_string(p).substr(0, 4);
  norm.epsilons = opts.epsilons;
  norm.limit = limit_norm(limit, p, opts);
  norm.values.assign(opts.epsilons.size(), 0.0);
  parallel_for(opts.epsilons.size(), opts.threads,
               [&](std::size_t i) { norm.values[i] = sequence_norm(seq, opts.epsilons[i], p, opts); });
  norm.tolerance = opts.tolerance;
  finalize(norm, opts.noise_floor);
  check.reports.push_back(norm);
  check.pass = std::all_of(check.reports.begin(), check.reports.end(), [](const auto& r) { return r.pass; });
  return check;
}

SigmaCheck check_product(const OscillatorySequence& u, const TwoScaleFunction& u_limit, const OscillatorySequence& v,
                         const TwoScaleFunction& v_limit, const std::vector<SeparableField>& tests,
                         const Exponents& ex, const CheckOptions& opts) {
  if (!(ex.p >= 1.0 && ex.q >= 1.0) || 1.0 / ex.p + 1.0 / ex.q > 1.0 + 1e-15)
    throw UsageError("product theorem needs 1/r = 1/p + 1/q <= 1");
  if (u.eps1().scale != v.eps1().scale || u.eps1().power != v.eps1().power || u.eps2().scale != v.eps2().scale ||
      u.eps2().power != v.eps2().power)
    throw UsageError("product sequences must share the scale couplings");
  if (u.is_random() && v.is_random()) throw UnsupportedOperation("product of two random-amplitude sequences");
  if (!u_limit.separable() || !v_limit.separable()) throw UnsupportedOperation("product limits must be separable");
  std::vector<SequenceTerm> terms;
  for (const auto& a : u.terms())
    for (const auto& b : v.terms())
      terms.push_back({a.coefficient * b.coefficient, a.eps_power + b.eps_power, a.field * b.field, a.random || b.random});
  const AmplitudeLaw law = u.is_random() ? u.law() : v.law();
  const OscillatorySequence uv(u.domain(), terms, law, u.eps1(), u.eps2());
  const TwoScaleFunction limit(u.domain(), u_limit.u0() * v_limit.u0());
  SigmaCheck check = weak_reports(uv, limit, tests, opts);
  check.kind = "product";
  return check;
}

SigmaCheck check_gradient_decomposition(const TwoScaleFunction& u, const std::vector<SeparableField>& tests,
                                        const CheckOptions& opts, const AmplitudeLaw& law, bool random_corrector) {
  if (!u.separable()) throw UnsupportedOperation("gradient decomposition needs a separable (u0, u1)");
  if (!is_macro_only(u.u0())) throw UsageError("u0 must not depend on the cell variable");
  const OscillatorySequence seq = u.reconstruction(law, random_corrector);
  SigmaCheck check;
  check.kind = "gradient";
  const double scale = random_corrector ? law.mean() : (law.kind == AmplitudeLaw::Kind::Fixed ? law.a : 1.0);
  for (int axis = 0; axis < u.domain().spatial_dimension(); ++axis) {
    SeparableField predicted = u.u0().empty() ? SeparableField{} : u.u0().macro_derivative(axis);
    if (!u.u1().empty()) predicted = predicted + u.u1().cell_derivative(axis).scaled(scale);
    const TwoScaleFunction limit(u.domain(), predicted);
    const auto grad = seq.gradient(axis);
    for (std::size_t i = 0; i < tests.size(); ++i)
      check.reports.push_back(run_pairing("d/dx" + std::to_string(axis + 1) + " " + describe_test(i, tests[i]), grad,
                                          sigma_limit_value(limit, tests[i], opts), tests[i], opts));
  }
  check.pass = std::all_of(check.reports.begin(), check.reports.end(), [](const auto& r) { return r.pass; });
  return check;
}

FluxReport check_flux_liminf(const Flux& a, const OscillatorySequence& v, const TwoScaleFunction& v0,
                             const CheckOptions& opts, int cell_grid) {
  if (v.is_random()) throw UnsupportedOperation("flux check expects a deterministic sequence");
  if (v.domain().horizon) throw UnsupportedOperation("flux check is stationary");
  const auto& geo = v.geometry();
  if (geo.kind() != CellKind::PeriodicTorus) throw UnsupportedOperation("flux check unfolds on a periodic cell");
  const int d = v.domain().spatial_dimension();
  FluxReport out;
  auto& rep = out.pairing;
  rep.label = "flux pairing";
  rep.epsilons = opts.epsilons;
  rep.values.assign(opts.epsilons.size(), 0.0);
  // Limit: int_Q int_cell a(X, y, v0) v0, nonlinear in v0 so oversample the cell.
  rep.limit = integrate_q_cell(v.domain(), geo, nullptr, 4.0 * std::max(1.0, v.cell_frequency()), 0.0,
                               v.macro_frequency(), opts, [&](std::span<const double> X, std::span<const double> y, double) {
                                 const double w = v0(X, y);
                                 return a(X, y, w) * w;
                               });
  parallel_for(opts.epsilons.size(), opts.threads, [&](std::size_t i) {
    const double eps = opts.epsilons[i];
    const double e1 = v.eps1()(eps);
    const auto axes = eps_mesh(v.domain(), e1, e1, 4.0 * std::max(1.0, v.cell_frequency()), 0.0, v.macro_frequency(), opts);
    double total = 0.0;
    std::vector<double> y(static_cast<std::size_t>(d));
    tensor_sweep(axes, [&](std::span<const double> X, double w) {
      for (int k = 0; k < d; ++k) y[k] = X[k] / e1;
      const double val = v(X, eps);
      total += w * a(X, y, val) * val;
    });
    rep.values[i] = total;
  });
  rep.tolerance = opts.tolerance;
  finalize(rep, opts.noise_floor);
  const std::size_t n = rep.values.size();
  const double tail_min = *std::min_element(rep.values.begin() + static_cast<long>(n >= 3 ? n - 3 : 0), rep.values.end());
  out.liminf_holds = rep.limit <= tail_min + opts.tolerance;

  // Unfolding at the smallest eps: compare a^eps(x_eps, v_eps(x_eps)) with
  // a(x, y, v0(x, y)) at x_eps = eps1 (P floor(x / (eps1 P)) + y).
  const double eps = opts.epsilons.back(), e1 = v.eps1()(eps);
  const int nx = 8;
  double worst = 0.0, lip = 0.0;
  std::vector<int> idx(static_cast<std::size_t>(2 * d), 0);
  std::size_t total = 1;
  for (int k = 0; k < d; ++k) total *= static_cast<std::size_t>(nx * cell_grid);
  std::vector<double> X(static_cast<std::size_t>(d)), Xe(static_cast<std::size_t>(d)), y(static_cast<std::size_t>(d)),
      ye(static_cast<std::size_t>(d));
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t rem = c;
    for (int k = d; k-- > 0;) {
      const int iy = static_cast<int>(rem % static_cast<std::size_t>(cell_grid));
      rem /= static_cast<std::size_t>(cell_grid);
      const int ix = static_cast<int>(rem % nx);
      rem /= nx;
      const double P = geo.periods()[k];
      const double len = v.domain().hi[k] - v.domain().lo[k];
      X[k] = v.domain().lo[k] + (ix + 0.5) * len / nx;
      y[k] = (iy + 0.5) * P / cell_grid;
      Xe[k] = e1 * (P * std::floor(X[k] / (e1 * P)) + y[k]);
      ye[k] = Xe[k] / e1;
    }
    const double target = a(X, y, v0(X, y));
    const double got = a(Xe, ye, v(Xe, eps));
    worst = std::max(worst, std::abs(got - target));
    // First-order macro sensitivity of the unfolded target.
    for (int k = 0; k < d; ++k) {
      std::vector<double> Xh = X;
      const double h = 1e-5 * (v.domain().hi[k] - v.domain().lo[k]);
      Xh[k] += h;
      lip = std::max(lip, std::abs(a(Xh, y, v0(Xh, y)) - target) / h);
    }
  }
  out.unfolding_error = worst;
  double max_period = 0.0;
  for (double P : geo.periods()) max_period = std::max(max_period, P);
  const bool unfold_ok = worst <= opts.tolerance + lip * e1 * max_period * std::sqrt(static_cast<double>(d));
  out.pass = rep.pass && out.liminf_holds && unfold_ok;
  return out;
}

}  // namespace homog::sigma
