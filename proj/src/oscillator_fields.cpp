#include "homog/oscillator_fields.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>

#include "homog/error.hpp"
#include "homog/quadrature.hpp"

namespace homog::fields {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double wrap_unit(double u) { return u - std::floor(u); }

std::size_t grid_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  return n;
}

std::size_t grid_index(const std::vector<int>& shape, std::span<const long> idx) {
  std::size_t flat = 0;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    long i = idx[d] % shape[d];
    if (i < 0) i += shape[d];
    flat = flat * static_cast<std::size_t>(shape[d]) + static_cast<std::size_t>(i);
  }
  return flat;
}

std::array<double, 4> catmull_rom(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {0.5 * (-t3 + 2 * t2 - t), 0.5 * (3 * t3 - 5 * t2 + 2), 0.5 * (-3 * t3 + 4 * t2 + t), 0.5 * (t3 - t2)};
}

double eval_grid(const GridSample& g, const std::vector<double>& periods, std::span<const double> y) {
  const std::size_t dim = g.shape.size();
  std::vector<long> base(dim);
  std::vector<double> frac(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    const double u = wrap_unit(y[d] / periods[d]) * g.shape[d];
    base[d] = static_cast<long>(std::floor(u));
    frac[d] = u - static_cast<double>(base[d]);
  }
  const int width = g.order == 3 ? 4 : 2;
  const int first = g.order == 3 ? -1 : 0;
  std::vector<std::array<double, 4>> weights(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    if (g.order == 3)
      weights[d] = catmull_rom(frac[d]);
    else
      weights[d] = {1.0 - frac[d], frac[d], 0.0, 0.0};
  }
  std::size_t corners = 1;
  for (std::size_t d = 0; d < dim; ++d) corners *= static_cast<std::size_t>(width);
  std::vector<long> idx(dim);
  double value = 0.0;
  for (std::size_t c = 0; c < corners; ++c) {
    std::size_t rem = c;
    double w = 1.0;
    for (std::size_t d = dim; d-- > 0;) {
      const int o = static_cast<int>(rem % width);
      rem /= width;
      idx[d] = base[d] + first + o;
      w *= weights[d][o];
    }
    value += w * g.values[grid_index(g.shape, idx)];
  }
  return value;
}

double eval_piecewise(const PiecewiseConstant& pc, const std::vector<double>& periods, std::span<const double> y) {
  std::size_t flat = 0;
  for (std::size_t d = 0; d < pc.breaks.size(); ++d) {
    const double u = wrap_unit(y[d] / periods[d]) * periods[d];
    const auto& b = pc.breaks[d];
    const std::size_t bin = static_cast<std::size_t>(std::upper_bound(b.begin(), b.end(), u) - b.begin());
    flat = flat * (b.size() + 1) + bin;
  }
  return pc.values[flat];
}

double eval_slow(const SlowOscillation& s, double alpha, double z) {
  double value = s.constant;
  for (const auto& term : s.terms) {
    double prod = term.coefficient;
    for (double a : term.shifts) prod *= std::cos(std::pow(std::abs(z + a), alpha));
    value += prod;
  }
  return value;
}

/// Trigonometric polynomial with the offset folded into the phases.
TrigPolynomial absorb_offset(const TrigPolynomial& p, const CellGeometry& g, const std::vector<double>& offset) {
  TrigPolynomial out = p;
  for (auto& t : out.terms) {
    const auto w = g.frequency(t.k);
    double dot = 0.0;
    for (std::size_t d = 0; d < w.size(); ++d) dot += w[d] * offset[d];
    t.phase += kTwoPi * dot;
  }
  return out;
}

/// Complex Fourier coefficients keyed by multi-index: f = sum_k c_k e^{2 pi i omega(k).y}.
std::map<std::vector<int>, std::complex<double>> fourier_coefficients(const TrigPolynomial& p) {
  std::map<std::vector<int>, std::complex<double>> c;
  for (const auto& t : p.terms) {
    std::vector<int> neg(t.k.size());
    std::transform(t.k.begin(), t.k.end(), neg.begin(), [](int v) { return -v; });
    c[t.k] += 0.5 * t.amplitude * std::polar(1.0, t.phase);
    c[neg] += 0.5 * t.amplitude * std::polar(1.0, -t.phase);
  }
  return c;
}

bool is_zero(const std::vector<int>& k) {
  return std::all_of(k.begin(), k.end(), [](int v) { return v == 0; });
}

/// Composite rule along one axis described by nodes/weights.
struct AxisRule {
  std::vector<double> x;
  std::vector<double> w;
};

AxisRule axis_rule(const std::vector<double>& cuts) {
  const auto& r = quad::gauss_legendre4();
  AxisRule rule;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
    const double half = 0.5 * (cuts[i + 1] - cuts[i]);
    for (int q = 0; q < 4; ++q) {
      rule.x.push_back(mid + half * r.nodes[q]);
      rule.w.push_back(half * r.weights[q]);
    }
  }
  return rule;
}

std::vector<double> uniform_cuts(double a, double b, std::size_t panels, const std::vector<double>& breaks = {}) {
  std::vector<double> cuts;
  for (std::size_t k = 0; k <= panels; ++k) cuts.push_back(a + (b - a) * static_cast<double>(k) / panels);
  for (double c : breaks)
    if (c > a && c < b) cuts.push_back(c);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(), [](double u, double v) { return std::abs(u - v) < 1e-14; }),
             cuts.end());
  return cuts;
}

/// Tensor product quadrature returning (integral, sup |f|).
std::pair<double, double> tensor_integral(const CellMap& f, const std::vector<AxisRule>& axes, double max_points) {
  double npts = 1.0;
  for (const auto& a : axes) npts *= static_cast<double>(a.x.size());
  if (npts > max_points) throw BudgetError("quadrature would need " + std::to_string(npts) + " points");
  const std::size_t dim = axes.size();
  std::vector<std::size_t> idx(dim, 0);
  std::vector<double> point(dim);
  double total = 0.0, sup = 0.0;
  const std::size_t n = static_cast<std::size_t>(npts);
  for (std::size_t c = 0; c < n; ++c) {
    double w = 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
      point[d] = axes[d].x[idx[d]];
      w *= axes[d].w[idx[d]];
    }
    const double v = f(point);
    sup = std::max(sup, std::abs(v));
    total += w * v;
    for (std::size_t d = dim; d-- > 0;) {
      if (++idx[d] < axes[d].x.size()) break;
      idx[d] = 0;
    }
  }
  return {total, sup};
}

MeanValueEstimate combine_product(const MeanValueEstimate& a, const MeanValueEstimate& b) {
  MeanValueEstimate out = a;
  out.value = a.value * b.value;
  out.error = std::abs(a.value) * b.error + std::abs(b.value) * a.error + a.error * b.error;
  out.divergent = a.divergent || b.divergent;
  return out;
}

double min_nonzero_frequency(const OscillatoryField& f) {
  double best = 0.0;
  if (const auto* tp = std::get_if<TrigPolynomial>(&f.generator())) {
    for (const auto& t : tp->terms) {
      if (t.amplitude == 0.0 || is_zero(t.k)) continue;
      const auto w = f.geometry().frequency(t.k);
      double n = 0.0;
      for (double v : w) n += v * v;
      n = std::sqrt(n);
      if (n > 0.0 && (best == 0.0 || n < best)) best = n;
    }
  }
  return best;
}

/// Cell quadrature of g(f) over the periodic torus or the frequency torus.
MeanValueEstimate cell_quadrature(const OscillatoryField& field, const std::function<double(double)>& g,
                                  const MeanParams& params) {
  const auto& geo = field.geometry();
  auto compute = [&](int refine) -> std::pair<double, double> {
    std::vector<AxisRule> axes;
    CellMap integrand;
    double volume = 1.0;
    if (geo.kind() == CellKind::PeriodicTorus) {
      const double freq = field.resolution_frequency();
      for (int d = 0; d < geo.dimension(); ++d) {
        const double P = geo.periods()[d];
        std::size_t panels = std::max<std::size_t>(
            params.min_cell_panels,
            static_cast<std::size_t>(std::ceil(P * freq * params.cell_panels_per_wavelength)));
        std::vector<double> breaks;
        if (const auto* gs = std::get_if<GridSample>(&field.generator())) {
          panels = static_cast<std::size_t>(gs->shape[d]);
        } else if (const auto* pc = std::get_if<PiecewiseConstant>(&field.generator())) {
          for (double b : pc->breaks[d]) breaks.push_back(wrap_unit((b - field.offset()[d]) / P) * P);
        }
        axes.push_back(axis_rule(uniform_cuts(0.0, P, panels * refine, breaks)));
        volume *= P;
      }
      integrand = [&](std::span<const double> y) { return g(field(y)); };
    } else if (geo.kind() == CellKind::Quasiperiodic) {
      const auto* tp = std::get_if<TrigPolynomial>(&field.generator());
      if (!tp) throw UnsupportedOperation("quasiperiodic cell quadrature needs a trigonometric polynomial");
      const int rank = geo.frequency_rank();
      if (rank > 3) throw BudgetError("frequency torus of rank > 3 is not integrated");
      const TrigPolynomial shifted = absorb_offset(*tp, geo, field.offset());
      for (int j = 0; j < rank; ++j) {
        int kmax = 1;
        for (const auto& t : shifted.terms) kmax = std::max(kmax, std::abs(t.k[j]));
        const std::size_t panels = std::max<std::size_t>(params.min_cell_panels,
                                                         static_cast<std::size_t>(kmax * params.cell_panels_per_wavelength));
        axes.push_back(axis_rule(uniform_cuts(0.0, 1.0, panels * refine)));
      }
      integrand = [shifted, &g](std::span<const double> theta) {
        double v = 0.0;
        for (const auto& t : shifted.terms) {
          double dot = 0.0;
          for (std::size_t j = 0; j < theta.size(); ++j) dot += t.k[j] * theta[j];
          v += t.amplitude * std::cos(kTwoPi * dot + t.phase);
        }
        return g(v);
      };
    } else {
      throw UnsupportedOperation("cell quadrature is undefined for the slow-oscillation geometry");
    }
    auto [integral, sup] = tensor_integral(integrand, axes, params.window.max_points);
    return {integral / volume, sup};
  };
  const auto coarse = compute(1);
  const auto fine = compute(2);
  MeanValueEstimate est;
  est.method = MeanMethod::CellQuadrature;
  est.value = fine.first;
  est.error = std::abs(fine.first - coarse.first) + 1e-14 * std::max(1.0, fine.second);
  return est;
}

std::function<double(std::span<const double>)> wavelength_of(const OscillatoryField& field) {
  const auto& geo = field.geometry();
  if (geo.kind() == CellKind::SlowOscillation) {
    std::vector<double> shifts = geo.shifts();
    if (const auto* s = std::get_if<SlowOscillation>(&field.generator()))
      for (const auto& t : s->terms) shifts.insert(shifts.end(), t.shifts.begin(), t.shifts.end());
    if (shifts.empty()) shifts.push_back(0.0);
    const double alpha = geo.exponent();
    const double offset = field.offset().empty() ? 0.0 : field.offset()[0];
    return [shifts, alpha, offset](std::span<const double> z) {
      double best = std::numeric_limits<double>::infinity();
      for (double a : shifts) {
        const double s = std::abs(z[0] + offset + a);
        // Capped by the distance to the cusp so panels grade geometrically into it.
        best = std::min({best, kTwoPi * std::pow(s, 1.0 - alpha) / alpha, 4.0 * s});
      }
      return best;
    };
  }
  const double f = field.resolution_frequency();
  const double wl = f > 0.0 ? 1.0 / f : std::numeric_limits<double>::infinity();
  return [wl](std::span<const double>) { return wl; };
}

MeanValueEstimate window_mean_of(const OscillatoryField& field, const CellMap& f, const MeanParams& params) {
  WindowSchedule sched = params.window;
  const WindowSchedule defaults = default_schedule(field.geometry());
  if (!(sched.r0 > 0.0)) {
    sched.r0 = defaults.r0;
    const double fmin = min_nonzero_frequency(field);
    if (field.geometry().kind() != CellKind::SlowOscillation && fmin > 0.0) sched.r0 = std::max(sched.r0, 4.0 / fmin);
  }
  if (sched.levels < 0) sched.levels = defaults.levels;
  return expanding_window_mean(f, field.geometry().dimension(), wavelength_of(field), sched);
}

}  // namespace

std::string to_string(CellKind kind) {
  switch (kind) {
    case CellKind::PeriodicTorus: return "periodic-torus";
    case CellKind::Quasiperiodic: return "quasiperiodic";
    case CellKind::SlowOscillation: return "slow-oscillation";
  }
  return "?";
}

CellKind cell_kind_from_string(const std::string& name) {
  if (name == "periodic-torus" || name == "periodic") return CellKind::PeriodicTorus;
  if (name == "quasiperiodic") return CellKind::Quasiperiodic;
  if (name == "slow-oscillation") return CellKind::SlowOscillation;
  throw UsageError("unknown cell kind '" + name + "'");
}

std::string to_string(MeanMethod method) {
  switch (method) {
    case MeanMethod::Exact: return "exact";
    case MeanMethod::CellQuadrature: return "cell-quadrature";
    case MeanMethod::ExpandingWindow: return "expanding-window";
  }
  return "?";
}

MeanMethod mean_method_from_string(const std::string& name) {
  if (name == "exact") return MeanMethod::Exact;
  if (name == "cell-quadrature") return MeanMethod::CellQuadrature;
  if (name == "expanding-window") return MeanMethod::ExpandingWindow;
  throw UsageError("unknown mean-value method '" + name + "'");
}

CellGeometry CellGeometry::periodic(int dimension, std::vector<double> periods) {
  if (dimension < 1) throw UsageError("cell dimension must be >= 1");
  if (periods.empty()) periods.assign(static_cast<std::size_t>(dimension), 1.0);
  if (periods.size() != static_cast<std::size_t>(dimension)) throw UsageError("period vector length must equal dimension");
  for (double p : periods)
    if (!(p > 0.0)) throw UsageError("periods must be strictly positive");
  CellGeometry g;
  g.dimension_ = dimension;
  g.kind_ = CellKind::PeriodicTorus;
  g.periods_ = std::move(periods);
  return g;
}

CellGeometry CellGeometry::quasiperiodic(int dimension, std::vector<std::vector<double>> base_frequencies,
                                         bool declared_independent) {
  if (dimension < 1) throw UsageError("cell dimension must be >= 1");
  if (base_frequencies.empty()) throw UsageError("quasiperiodic geometry needs at least one base frequency");
  for (const auto& w : base_frequencies)
    if (w.size() != static_cast<std::size_t>(dimension)) throw UsageError("base frequency has wrong dimension");
  CellGeometry g;
  g.dimension_ = dimension;
  g.kind_ = CellKind::Quasiperiodic;
  g.base_frequencies_ = std::move(base_frequencies);
  g.declared_independent_ = declared_independent;
  return g;
}

CellGeometry CellGeometry::slow_oscillation(double exponent, std::vector<double> shifts) {
  if (!(exponent > 0.0 && exponent < 1.0)) throw UsageError("slow-oscillation exponent must lie in (0,1)");
  CellGeometry g;
  g.dimension_ = 1;
  g.kind_ = CellKind::SlowOscillation;
  g.exponent_ = exponent;
  g.shifts_ = shifts.empty() ? std::vector<double>{0.0} : std::move(shifts);
  return g;
}

int CellGeometry::frequency_rank() const {
  switch (kind_) {
    case CellKind::PeriodicTorus: return dimension_;
    case CellKind::Quasiperiodic: return static_cast<int>(base_frequencies_.size());
    case CellKind::SlowOscillation: return 0;
  }
  return 0;
}

std::vector<double> CellGeometry::frequency(std::span<const int> k) const {
  std::vector<double> w(static_cast<std::size_t>(dimension_), 0.0);
  if (static_cast<int>(k.size()) != frequency_rank())
    throw UsageError("frequency index has rank " + std::to_string(k.size()) + ", expected " +
                     std::to_string(frequency_rank()));
  if (kind_ == CellKind::PeriodicTorus) {
    for (int d = 0; d < dimension_; ++d) w[d] = k[d] / periods_[d];
  } else if (kind_ == CellKind::Quasiperiodic) {
    for (std::size_t j = 0; j < k.size(); ++j)
      for (int d = 0; d < dimension_; ++d) w[d] += k[j] * base_frequencies_[j][d];
  }
  return w;
}

OscillatoryField::OscillatoryField(CellGeometry geometry, Generator generator)
    : geometry_(std::move(geometry)), generator_(std::move(generator)) {
  const int dim = geometry_.dimension();
  offset_.assign(static_cast<std::size_t>(dim), 0.0);
  std::visit(overloaded{
                 [&](const TrigPolynomial& p) {
                   if (geometry_.kind() == CellKind::SlowOscillation)
                     throw UsageError("trigonometric polynomial on a slow-oscillation geometry");
                   for (const auto& t : p.terms)
                     if (static_cast<int>(t.k.size()) != geometry_.frequency_rank())
                       throw UsageError("trigonometric term has frequency rank " + std::to_string(t.k.size()));
                 },
                 [&](const GridSample& g) {
                   if (geometry_.kind() != CellKind::PeriodicTorus)
                     throw UsageError("grid samples require a periodic geometry");
                   if (static_cast<int>(g.shape.size()) != dim) throw UsageError("grid shape does not match dimension");
                   for (int s : g.shape)
                     if (s < 4) throw UsageError("grid needs at least 4 samples per axis");
                   if (grid_size(g.shape) != g.values.size()) throw UsageError("grid value count does not match shape");
                   if (g.order != 1 && g.order != 3) throw UsageError("grid interpolation order must be 1 or 3");
                 },
                 [&](const PiecewiseConstant& pc) {
                   if (geometry_.kind() != CellKind::PeriodicTorus)
                     throw UsageError("piecewise-constant generators require a periodic geometry");
                   if (static_cast<int>(pc.breaks.size()) != dim) throw UsageError("breakpoint lists do not match dimension");
                   std::size_t n = 1;
                   for (int d = 0; d < dim; ++d) {
                     const auto& b = pc.breaks[d];
                     if (!std::is_sorted(b.begin(), b.end())) throw UsageError("breakpoints must be sorted");
                     for (double v : b)
                       if (!(v > 0.0 && v < geometry_.periods()[d])) throw UsageError("breakpoints must lie inside the cell");
                     n *= b.size() + 1;
                   }
                   if (n != pc.values.size()) throw UsageError("piecewise value count does not match breakpoints");
                 },
                 [&](const SlowOscillation&) {
                   if (geometry_.kind() != CellKind::SlowOscillation)
                     throw UsageError("slow-oscillation generator needs the slow-oscillation geometry");
                 },
             },
             generator_);
}

OscillatoryField OscillatoryField::constant(double value, CellGeometry geometry) {
  if (geometry.kind() == CellKind::SlowOscillation) return {std::move(geometry), SlowOscillation{value, {}}};
  const int rank = geometry.frequency_rank();
  return {std::move(geometry), TrigPolynomial{{TrigTerm{std::vector<int>(static_cast<std::size_t>(rank), 0), value, 0.0}}}};
}

OscillatoryField OscillatoryField::trig(CellGeometry geometry, std::vector<TrigTerm> terms) {
  return {std::move(geometry), TrigPolynomial{std::move(terms)}};
}

OscillatoryField OscillatoryField::with_time_factor(OscillatoryField factor) const {
  if (factor.geometry().dimension() != 1) throw UsageError("time factor must live on a one-dimensional cell");
  if (factor.time_factor()) throw UsageError("time factor cannot itself carry a time factor");
  OscillatoryField out = *this;
  out.time_factor_ = std::make_shared<const OscillatoryField>(std::move(factor));
  return out;
}

OscillatoryField OscillatoryField::with_offset(std::vector<double> offset) const {
  if (offset.size() != offset_.size()) throw UsageError("offset dimension mismatch");
  OscillatoryField out = *this;
  out.offset_ = std::move(offset);
  return out;
}

double OscillatoryField::spatial(std::span<const double> y) const {
  const int dim = geometry_.dimension();
  if (static_cast<int>(y.size()) != dim)
    throw UsageError("evaluation point has dimension " + std::to_string(y.size()) + ", field has " + std::to_string(dim));
  double shifted_buf[8];
  std::vector<double> heap;
  double* shifted = shifted_buf;
  if (dim > 8) {
    heap.resize(static_cast<std::size_t>(dim));
    shifted = heap.data();
  }
  for (int d = 0; d < dim; ++d) shifted[d] = y[d] + offset_[d];
  const std::span<const double> ys(shifted, static_cast<std::size_t>(dim));
  return std::visit(overloaded{
                        [&](const TrigPolynomial& p) {
                          double v = 0.0;
                          for (const auto& t : p.terms) {
                            double dot = 0.0;
                            if (geometry_.kind() == CellKind::PeriodicTorus) {
                              for (int d = 0; d < dim; ++d) dot += t.k[d] * ys[d] / geometry_.periods()[d];
                            } else {
                              for (std::size_t j = 0; j < t.k.size(); ++j)
                                for (int d = 0; d < dim; ++d) dot += t.k[j] * geometry_.base_frequencies()[j][d] * ys[d];
                            }
                            v += t.amplitude * std::cos(kTwoPi * dot + t.phase);
                          }
                          return v;
                        },
                        [&](const GridSample& g) { return eval_grid(g, geometry_.periods(), ys); },
                        [&](const PiecewiseConstant& pc) { return eval_piecewise(pc, geometry_.periods(), ys); },
                        [&](const SlowOscillation& s) { return eval_slow(s, geometry_.exponent(), ys[0]); },
                    },
                    generator_);
}

double OscillatoryField::operator()(std::span<const double> y) const {
  if (time_factor_) return (*this)(y, 0.0);
  return spatial(y);
}

double OscillatoryField::operator()(std::span<const double> y, double tau) const {
  const double s = spatial(y);
  if (!time_factor_) return s;
  const double t[1] = {tau};
  return s * (*time_factor_)(std::span<const double>(t, 1));
}

double OscillatoryField::operator()(double y) const { return (*this)(std::span<const double>(&y, 1)); }

double OscillatoryField::resolution_frequency() const {
  return std::visit(overloaded{
                        [&](const TrigPolynomial& p) {
                          double best = 0.0;
                          for (const auto& t : p.terms) {
                            if (t.amplitude == 0.0) continue;
                            const auto w = geometry_.frequency(t.k);
                            double n = 0.0;
                            for (double v : w) n += v * v;
                            best = std::max(best, std::sqrt(n));
                          }
                          return best;
                        },
                        [&](const GridSample& g) {
                          double best = 0.0;
                          for (std::size_t d = 0; d < g.shape.size(); ++d)
                            best = std::max(best, g.shape[d] / geometry_.periods()[d]);
                          return best;
                        },
                        [&](const PiecewiseConstant& pc) {
                          double best = 0.0;
                          for (std::size_t d = 0; d < pc.breaks.size(); ++d)
                            best = std::max(best, 4.0 * (pc.breaks[d].size() + 1) / geometry_.periods()[d]);
                          return best;
                        },
                        [&](const SlowOscillation&) { return 1.0; },
                    },
                    generator_);
}

bool OscillatoryField::operator==(const OscillatoryField& other) const {
  if (!(geometry_ == other.geometry_) || !(generator_ == other.generator_) || offset_ != other.offset_) return false;
  if (static_cast<bool>(time_factor_) != static_cast<bool>(other.time_factor_)) return false;
  return !time_factor_ || *time_factor_ == *other.time_factor_;
}

WindowSchedule default_schedule(const CellGeometry& geometry) {
  WindowSchedule s;
  if (geometry.kind() == CellKind::SlowOscillation) {
    s.r0 = 1e3;
    s.levels = 8;
  } else if (geometry.dimension() == 1) {
    double p = 1.0;
    for (double v : geometry.periods()) p = std::max(p, v);
    s.r0 = 16.0 * p;
    s.levels = 3;
  } else {
    double p = 1.0;
    for (double v : geometry.periods()) p = std::max(p, v);
    s.r0 = 2.0 * p;
    s.levels = 1;
  }
  return s;
}

double evaluate(const OscillatoryField& field, std::span<const double> y) { return field(y); }
double evaluate(const OscillatoryField& field, std::span<const double> y, double tau) { return field(y, tau); }

MeanValueEstimate expanding_window_mean(const CellMap& f, int dimension,
                                        const std::function<double(std::span<const double>)>& wavelength,
                                        const WindowSchedule& schedule) {
  if (dimension < 1) throw UsageError("window dimension must be >= 1");
  if (!(schedule.r0 > 0.0) || schedule.levels < 0) throw UsageError("expanding-window schedule needs r0 > 0, levels >= 0");
  const double q = schedule.points_per_wavelength;
  const double truncation = dimension == 1 ? 6.0 : 5.0;
  MeanValueEstimate est;
  est.method = MeanMethod::ExpandingWindow;
  double sup = 0.0;
  for (int k = 0; k <= schedule.levels; ++k) {
    const double r = schedule.r0 * std::ldexp(1.0, k);
    const double L = truncation * r;
    std::vector<AxisRule> axes;
    if (dimension == 1) {
      std::vector<double> cuts{-L};
      double z = -L;
      while (z < L) {
        const double pt[1] = {z};
        double w = std::min(r / q, std::max(1e-9, wavelength(std::span<const double>(pt, 1)) / q));
        z = std::min(L, z + w);
        cuts.push_back(z);
        if (cuts.size() > schedule.max_points) throw BudgetError("expanding window exceeds point budget");
      }
      axes.push_back(axis_rule(cuts));
    } else {
      std::vector<double> origin(static_cast<std::size_t>(dimension), 0.0);
      const double w = std::min(r / q, wavelength(origin) / q);
      const std::size_t panels = quad::panels_for(2.0 * L, w);
      double total = 1.0;
      for (int d = 0; d < dimension; ++d) total *= 4.0 * static_cast<double>(panels);
      if (total > schedule.max_points) throw BudgetError("expanding window exceeds point budget");
      for (int d = 0; d < dimension; ++d) axes.push_back(axis_rule(uniform_cuts(-L, L, panels)));
    }
    // Normalise with the same rule so constants are reproduced to round-off.
    for (auto& axis : axes)
      for (std::size_t i = 0; i < axis.x.size(); ++i) {
        const double s = axis.x[i] / r;
        axis.w[i] *= std::exp(-s * s);
      }
    double norm = 1.0;
    for (const auto& axis : axes) {
      double s = 0.0;
      for (double w : axis.w) s += w;
      norm *= s;
    }
    auto [integral, s] = tensor_integral(f, axes, schedule.max_points);
    sup = std::max(sup, s);
    est.radii.push_back(r);
    est.window_values.push_back(integral / norm);
  }
  const auto& A = est.window_values;
  std::vector<double> R;
  R.push_back(A[0]);
  for (std::size_t k = 1; k < A.size(); ++k) R.push_back(2.0 * A[k] - A[k - 1]);
  const double floor = 1e-11 * std::max(1.0, sup);
  est.value = R.back();
  if (R.size() >= 3) {
    const double d1 = std::abs(R[R.size() - 1] - R[R.size() - 2]);
    const double d0 = std::abs(R[R.size() - 2] - R[R.size() - 3]);
    est.error = std::max({d1, d0, floor});
    est.divergent = d1 > floor && d1 > 0.5 * d0;
  } else if (R.size() == 2) {
    est.error = std::max(std::abs(A[1] - A[0]), floor);
  } else {
    est.error = std::numeric_limits<double>::infinity();
  }
  return est;
}

MeanValueEstimate mean_value(const OscillatoryField& field, MeanMethod method, const MeanParams& params) {
  if (field.time_factor()) {
    OscillatoryField spatial(field.geometry(), field.generator());
    spatial = spatial.with_offset(field.offset());
    return combine_product(mean_value(spatial, method, params), mean_value(*field.time_factor(), method, params));
  }
  switch (method) {
    case MeanMethod::Exact: {
      MeanValueEstimate est;
      est.method = MeanMethod::Exact;
      est.value = std::visit(
          overloaded{
              [&](const TrigPolynomial& p) {
                double v = 0.0;
                for (const auto& t : p.terms)
                  if (is_zero(t.k)) v += t.amplitude * std::cos(t.phase);
                return v;
              },
              [&](const GridSample& g) {
                double v = 0.0;
                for (double x : g.values) v += x;
                return v / static_cast<double>(g.values.size());
              },
              [&](const PiecewiseConstant& pc) {
                // Volume of each tensor cell times its value.
                const int dim = static_cast<int>(pc.breaks.size());
                double total = 0.0, volume = 1.0;
                for (int d = 0; d < dim; ++d) volume *= field.geometry().periods()[d];
                std::vector<std::size_t> idx(static_cast<std::size_t>(dim), 0);
                for (std::size_t c = 0; c < pc.values.size(); ++c) {
                  double vol = 1.0;
                  for (int d = 0; d < dim; ++d) {
                    const auto& b = pc.breaks[d];
                    const double lo = idx[d] == 0 ? 0.0 : b[idx[d] - 1];
                    const double hi = idx[d] == b.size() ? field.geometry().periods()[d] : b[idx[d]];
                    vol *= hi - lo;
                  }
                  total += vol * pc.values[c];
                  for (int d = dim; d-- > 0;) {
                    if (++idx[d] <= pc.breaks[d].size()) break;
                    idx[d] = 0;
                  }
                }
                return total / volume;
              },
              [&](const SlowOscillation& s) {
                if (!s.terms.empty())
                  throw UnsupportedOperation("no exact mean for a slow-oscillation generator; use expanding-window");
                return s.constant;
              },
          },
          field.generator());
      return est;
    }
    case MeanMethod::CellQuadrature:
      return cell_quadrature(field, [](double v) { return v; }, params);
    case MeanMethod::ExpandingWindow:
      return window_mean_of(field, [&field](std::span<const double> y) { return field(y); }, params);
  }
  throw UsageError("unknown mean method");
}

MeanValueEstimate besicovitch_seminorm(const OscillatoryField& field, double p, MeanMethod method,
                                       const MeanParams& params) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw UsageError("Besicovitch exponent must satisfy 1 <= p < inf");
  auto root = [p](MeanValueEstimate est) {
    const double m = std::max(est.value, 0.0);
    const double v = std::pow(m, 1.0 / p);
    // d(m^{1/p}) = (1/p) m^{1/p - 1} dm, bounded by the interval image.
    const double hi = std::pow(m + est.error, 1.0 / p);
    const double lo = std::pow(std::max(m - est.error, 0.0), 1.0 / p);
    est.value = v;
    est.error = std::max(hi - v, v - lo);
    return est;
  };
  if (field.time_factor()) {
    OscillatoryField spatial = OscillatoryField(field.geometry(), field.generator()).with_offset(field.offset());
    return combine_product(besicovitch_seminorm(spatial, p, method, params),
                           besicovitch_seminorm(*field.time_factor(), p, method, params));
  }
  switch (method) {
    case MeanMethod::Exact: {
      MeanValueEstimate est;
      est.method = MeanMethod::Exact;
      if (const auto* tp = std::get_if<TrigPolynomial>(&field.generator())) {
        if (p != 2.0) throw UnsupportedOperation("exact seminorm of a trigonometric polynomial requires p = 2");
        double s = 0.0;
        for (const auto& [k, c] : fourier_coefficients(*tp)) s += std::norm(c);
        est.value = std::sqrt(s);
        return est;
      }
      if (const auto* pc = std::get_if<PiecewiseConstant>(&field.generator())) {
        PiecewiseConstant powered = *pc;
        for (double& v : powered.values) v = std::pow(std::abs(v), p);
        est.value = std::pow(mean_value(OscillatoryField(field.geometry(), powered), MeanMethod::Exact).value, 1.0 / p);
        return est;
      }
      if (const auto* s = std::get_if<SlowOscillation>(&field.generator()); s && s->terms.empty()) {
        est.value = std::abs(s->constant);
        return est;
      }
      throw UnsupportedOperation("no exact seminorm for this generator; use cell-quadrature or expanding-window");
    }
    case MeanMethod::CellQuadrature:
      return root(cell_quadrature(field, [p](double v) { return std::pow(std::abs(v), p); }, params));
    case MeanMethod::ExpandingWindow:
      return root(window_mean_of(
          field, [&field, p](std::span<const double> y) { return std::pow(std::abs(field(y)), p); }, params));
  }
  throw UsageError("unknown mean method");
}

OscillatoryField cell_derivative(const OscillatoryField& field, int axis) {
  const int dim = field.geometry().dimension();
  if (axis < 0 || axis >= dim) throw UsageError("derivative axis out of range");
  Generator out = std::visit(
      overloaded{
          [&](const TrigPolynomial& p) -> Generator {
            TrigPolynomial d;
            for (const auto& t : p.terms) {
              const double w = field.geometry().frequency(t.k)[axis];
              if (w == 0.0 || t.amplitude == 0.0) continue;
              // d/dy cos(2 pi w y + phi) = 2 pi w cos(2 pi w y + phi + pi/2)
              d.terms.push_back({t.k, kTwoPi * w * t.amplitude, t.phase + 0.5 * std::numbers::pi});
            }
            if (d.terms.empty())
              d.terms.push_back({std::vector<int>(static_cast<std::size_t>(field.geometry().frequency_rank()), 0), 0.0, 0.0});
            return d;
          },
          [&](const GridSample& g) -> Generator {
            if (g.order != 3) throw UnsupportedOperation("cell derivative of a grid sample needs cubic interpolation");
            GridSample d = g;
            const double h = field.geometry().periods()[axis] / g.shape[axis];
            std::size_t stride = 1;
            for (int e = dim - 1; e > axis; --e) stride *= static_cast<std::size_t>(g.shape[e]);
            const long n = g.shape[axis];
            for (std::size_t flat = 0; flat < g.values.size(); ++flat) {
              const long i = static_cast<long>((flat / stride) % static_cast<std::size_t>(n));
              const std::size_t base = flat - static_cast<std::size_t>(i) * stride;
              auto at = [&](long j) {
                j = ((j % n) + n) % n;
                return g.values[base + static_cast<std::size_t>(j) * stride];
              };
              d.values[flat] = (-at(i + 2) + 8.0 * at(i + 1) - 8.0 * at(i - 1) + at(i - 2)) / (12.0 * h);
            }
            return d;
          },
          [&](const PiecewiseConstant&) -> Generator {
            throw UnsupportedOperation("piecewise-constant generators are not differentiable");
          },
          [&](const SlowOscillation&) -> Generator {
            throw UnsupportedOperation("slow-oscillation generators are not differentiable at the shift points");
          },
      },
      field.generator());
  OscillatoryField result(field.geometry(), std::move(out));
  result = result.with_offset(field.offset());
  if (field.time_factor()) result = result.with_time_factor(*field.time_factor());
  return result;
}

OscillatoryField translate(const OscillatoryField& field, std::span<const double> shift) {
  if (static_cast<int>(shift.size()) != field.geometry().dimension()) throw UsageError("shift dimension mismatch");
  std::vector<double> off = field.offset();
  for (std::size_t d = 0; d < off.size(); ++d) off[d] += shift[d];
  if (const auto* tp = std::get_if<TrigPolynomial>(&field.generator())) {
    OscillatoryField out(field.geometry(), absorb_offset(*tp, field.geometry(), off));
    if (field.time_factor()) out = out.with_time_factor(*field.time_factor());
    return out;
  }
  return field.with_offset(std::move(off));
}

OscillatoryField product(const OscillatoryField& lhs, const OscillatoryField& rhs) {
  if (!(lhs.geometry() == rhs.geometry())) throw GeometryMismatch("product of fields on different geometries");
  std::optional<OscillatoryField> time;
  if (lhs.time_factor() && rhs.time_factor())
    time = product(*lhs.time_factor(), *rhs.time_factor());
  else if (lhs.time_factor())
    time = *lhs.time_factor();
  else if (rhs.time_factor())
    time = *rhs.time_factor();

  std::optional<OscillatoryField> out;
  const auto* a = std::get_if<TrigPolynomial>(&lhs.generator());
  const auto* b = std::get_if<TrigPolynomial>(&rhs.generator());
  if (a && b) {
    const TrigPolynomial pa = absorb_offset(*a, lhs.geometry(), lhs.offset());
    const TrigPolynomial pb = absorb_offset(*b, rhs.geometry(), rhs.offset());
    TrigPolynomial prod;
    for (const auto& s : pa.terms)
      for (const auto& t : pb.terms) {
        std::vector<int> plus(s.k.size()), minus(s.k.size());
        for (std::size_t j = 0; j < s.k.size(); ++j) {
          plus[j] = s.k[j] + t.k[j];
          minus[j] = s.k[j] - t.k[j];
        }
        const double amp = 0.5 * s.amplitude * t.amplitude;
        prod.terms.push_back({plus, amp, s.phase + t.phase});
        prod.terms.push_back({minus, amp, s.phase - t.phase});
      }
    out = OscillatoryField(lhs.geometry(), std::move(prod));
  }
  const auto* sa = std::get_if<SlowOscillation>(&lhs.generator());
  const auto* sb = std::get_if<SlowOscillation>(&rhs.generator());
  if (sa && sb) {
    auto shifted = [](const SlowOscillation& s, double off) {
      SlowOscillation r = s;
      for (auto& t : r.terms)
        for (double& a : t.shifts) a += off;
      return r;
    };
    const SlowOscillation x = shifted(*sa, lhs.offset()[0]);
    const SlowOscillation y = shifted(*sb, rhs.offset()[0]);
    SlowOscillation prod;
    prod.constant = x.constant * y.constant;
    for (const auto& t : y.terms)
      if (x.constant != 0.0) prod.terms.push_back({x.constant * t.coefficient, t.shifts});
    for (const auto& t : x.terms)
      if (y.constant != 0.0) prod.terms.push_back({y.constant * t.coefficient, t.shifts});
    for (const auto& s : x.terms)
      for (const auto& t : y.terms) {
        SlowTerm st{s.coefficient * t.coefficient, s.shifts};
        st.shifts.insert(st.shifts.end(), t.shifts.begin(), t.shifts.end());
        prod.terms.push_back(std::move(st));
      }
    out = OscillatoryField(lhs.geometry(), std::move(prod));
  }
  if (!out) throw UnsupportedOperation("product is only closed for trigonometric or slow-oscillation generators");
  if (time) *out = out->with_time_factor(*time);
  return *out;
}

MeanValueEstimate mean_of_composition(const OscillatoryField& field, const std::function<double(double)>& g,
                                      const MeanParams& params) {
  if (field.time_factor()) {
    const auto& tf = *field.time_factor();
    if (field.geometry().kind() != CellKind::PeriodicTorus || tf.geometry().kind() != CellKind::PeriodicTorus)
      throw UnsupportedOperation("composition with a time factor needs periodic space and time cells");
    // Joint quadrature over cell x time cell.
    const int dim = field.geometry().dimension();
    std::vector<AxisRule> axes;
    for (int d = 0; d < dim; ++d) {
      const double P = field.geometry().periods()[d];
      axes.push_back(axis_rule(uniform_cuts(
          0.0, P, std::max<std::size_t>(params.min_cell_panels,
                                        static_cast<std::size_t>(P * field.resolution_frequency() * params.cell_panels_per_wavelength)))));
    }
    const double T = tf.geometry().periods()[0];
    axes.push_back(axis_rule(uniform_cuts(
        0.0, T, std::max<std::size_t>(params.min_cell_panels,
                                      static_cast<std::size_t>(T * tf.resolution_frequency() * params.cell_panels_per_wavelength)))));
    double volume = T;
    for (int d = 0; d < dim; ++d) volume *= field.geometry().periods()[d];
    auto [integral, sup] = tensor_integral(
        [&](std::span<const double> yt) { return g(field(yt.first(static_cast<std::size_t>(dim)), yt.back())); }, axes,
        params.window.max_points);
    MeanValueEstimate est;
    est.method = MeanMethod::CellQuadrature;
    est.value = integral / volume;
    est.error = 1e-12 * std::max(1.0, sup);
    return est;
  }
  if (field.geometry().kind() == CellKind::SlowOscillation)
    return window_mean_of(field, [&](std::span<const double> y) { return g(field(y)); }, params);
  return cell_quadrature(field, g, params);
}

double probe_sup(const OscillatoryField& field, int per_axis) {
  const int dim = field.geometry().dimension();
  std::vector<double> lo(static_cast<std::size_t>(dim)), hi(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    if (field.geometry().kind() == CellKind::PeriodicTorus) {
      lo[d] = 0.0;
      hi[d] = field.geometry().periods()[d];
    } else {
      lo[d] = -per_axis;
      hi[d] = per_axis;
    }
  }
  std::vector<int> idx(static_cast<std::size_t>(dim), 0);
  std::vector<double> y(static_cast<std::size_t>(dim));
  double sup = 0.0;
  std::size_t total = 1;
  for (int d = 0; d < dim; ++d) total *= static_cast<std::size_t>(per_axis);
  for (std::size_t c = 0; c < total; ++c) {
    for (int d = 0; d < dim; ++d) y[d] = lo[d] + (hi[d] - lo[d]) * (idx[d] + 0.5) / per_axis;
    double v = field(y);
    if (field.time_factor()) {
      for (int j = 0; j < per_axis; ++j) {
        const double P = field.time_factor()->geometry().kind() == CellKind::PeriodicTorus
                             ? field.time_factor()->geometry().periods()[0]
                             : 2.0 * per_axis;
        sup = std::max(sup, std::abs(field(y, (j + 0.5) * P / per_axis)));
      }
    } else {
      sup = std::max(sup, std::abs(v));
    }
    for (int d = dim; d-- > 0;) {
      if (++idx[d] < per_axis) break;
      idx[d] = 0;
    }
  }
  return sup;
}

}  // namespace homog::fields
