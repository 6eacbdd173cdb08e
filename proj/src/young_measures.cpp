#include "homog/young_measures.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <memory>

#include "homog/error.hpp"
#include "homog/parallel.hpp"
#include "homog/quadrature.hpp"

namespace homog::young {

namespace {

double cell_period(const OscillatorySequence& seq) {
  const auto& g = seq.geometry();
  if (g.kind() != fields::CellKind::PeriodicTorus || g.dimension() != 1)
    throw UnsupportedOperation("Young measure binning needs a one-dimensional periodic cell");
  return g.periods().empty() ? 1.0 : g.periods()[0];
}

void require_scalar_interval(const OscillatorySequence& seq) {
  const auto& d = seq.domain();
  if (d.spatial_dimension() != 1 || d.horizon)
    throw UnsupportedOperation("Young measures are estimated on an interval without time");
  if (seq.is_random()) throw UnsupportedOperation("Young measures of random-amplitude sequences");
}

std::size_t sample_count(const Bins& bins) {
  const double target = 1.25 * bins.nx * bins.ns * static_cast<double>(bins.min_samples);
  std::size_t m = 1;
  while (static_cast<double>(m) < target) m <<= 1;
  return m;
}

double wrap(double s, double period) {
  double r = std::fmod(s, period);
  if (r < 0) r += period;
  return r;
}

// Sample i of M midpoints of [lo, hi].
double sample_x(double lo, double hi, std::size_t i, std::size_t m) {
  return lo + (static_cast<double>(i) + 0.5) * (hi - lo) / static_cast<double>(m);
}

std::vector<double> sample_values(const OscillatorySequence& seq, double eps, std::size_t m, int threads) {
  const auto& d = seq.domain();
  std::vector<double> values(m);
  const std::size_t stripes = std::min<std::size_t>(m, 64);
  parallel_for(stripes, threads, [&](std::size_t t) {
    const std::size_t a = t * m / stripes, b = (t + 1) * m / stripes;
    for (std::size_t i = a; i < b; ++i) {
      const double x = sample_x(d.lo[0], d.hi[0], i, m);
      values[i] = seq(std::span<const double>(&x, 1), eps);
    }
  });
  return values;
}

template <class T>
void append_number(std::string& out, T v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

EmpiricalYoungMeasure::EmpiricalYoungMeasure(double x_lo, double x_hi, double period, std::pair<double, double> box,
                                             int nx, int ns, int nl)
    : x_lo_(x_lo), x_hi_(x_hi), period_(period), box_(box), nx_(nx), ns_(ns), nl_(nl) {
  if (nx < 1 || ns < 1 || nl < 1) throw UsageError("bin counts must be positive");
  if (!(x_hi > x_lo) || !(period > 0)) throw UsageError("empty interval or non-positive period");
  if (!(box.second > box.first)) throw UsageError("value box must have positive width");
  weights_.assign(static_cast<std::size_t>(nx) * ns * nl, 0.0);
  counts_.assign(static_cast<std::size_t>(nx) * ns, 0);
}

void EmpiricalYoungMeasure::add_sample(double x, double s, double value) {
  ++total_;
  if (value < box_.first || value > box_.second || !std::isfinite(value)) {
    ++clipped_;
    return;
  }
  const int i = std::clamp(static_cast<int>((x - x_lo_) / (x_hi_ - x_lo_) * nx_), 0, nx_ - 1);
  const int j = std::clamp(static_cast<int>(wrap(s, period_) / period_ * ns_), 0, ns_ - 1);
  const int k = std::clamp(static_cast<int>((value - box_.first) / lambda_width()), 0, nl_ - 1);
  weights_[index(i, j, k)] += 1.0;
  ++counts_[static_cast<std::size_t>(i * ns_ + j)];
}

void EmpiricalYoungMeasure::normalize() {
  for (int i = 0; i < nx_; ++i)
    for (int j = 0; j < ns_; ++j) {
      double sum = 0.0;
      for (int k = 0; k < nl_; ++k) sum += weights_[index(i, j, k)];
      if (sum <= 0) continue;
      for (int k = 0; k < nl_; ++k) weights_[index(i, j, k)] /= sum;
    }
}

void EmpiricalYoungMeasure::set_meta(double eps, int min_samples, double clip_threshold) {
  eps_ = eps;
  min_samples_ = min_samples;
  clip_threshold_ = clip_threshold;
}

std::vector<bool> EmpiricalYoungMeasure::starvation_mask() const {
  std::vector<bool> mask(counts_.size());
  for (std::size_t c = 0; c < counts_.size(); ++c) mask[c] = counts_[c] < min_samples_;
  return mask;
}

bool EmpiricalYoungMeasure::starved() const {
  return std::any_of(counts_.begin(), counts_.end(), [&](long c) { return c < min_samples_; });
}

double EmpiricalYoungMeasure::normalization_defect() const {
  double worst = 0.0;
  for (int i = 0; i < nx_; ++i)
    for (int j = 0; j < ns_; ++j) {
      if (count(i, j) == 0) continue;
      double sum = 0.0;
      for (int k = 0; k < nl_; ++k) sum += weight(i, j, k);
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  return worst;
}

bool EmpiricalYoungMeasure::beta_marginal_uniform() const {
  std::vector<double> marginal(static_cast<std::size_t>(ns_), 0.0);
  double n = 0.0;
  for (int i = 0; i < nx_; ++i)
    for (int j = 0; j < ns_; ++j) {
      marginal[static_cast<std::size_t>(j)] += static_cast<double>(count(i, j));
      n += static_cast<double>(count(i, j));
    }
  if (n == 0) return false;
  const double p = 1.0 / ns_;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (double c : marginal)
    if (std::abs(c - n * p) > 3 * sigma) return false;
  return true;
}

EmpiricalYoungMeasure estimate_young_measure(const OscillatorySequence& seq, double eps, const Bins& bins) {
  require_scalar_interval(seq);
  if (!(eps > 0)) throw UsageError("eps must be positive");
  if (bins.min_samples < 1) throw UsageError("min_samples must be positive");
  const double period = cell_period(seq);
  const double eps1 = seq.eps1()(eps);
  const auto& d = seq.domain();
  const std::size_t m = sample_count(bins);
  const std::vector<double> values = sample_values(seq, eps, m, bins.threads);

  std::pair<double, double> box;
  if (bins.box) {
    box = *bins.box;
  } else {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double range = *hi - *lo;
    const double pad = range > 0 ? bins.pad * range : bins.pad * std::max(1.0, std::abs(*lo));
    box = {*lo - pad, *hi + pad};
  }

  EmpiricalYoungMeasure nu(d.lo[0], d.hi[0], period, box, bins.nx, bins.ns, bins.nl);
  nu.set_meta(eps, bins.min_samples, bins.clip_threshold);
  for (std::size_t i = 0; i < m; ++i) {
    const double x = sample_x(d.lo[0], d.hi[0], i, m);
    nu.add_sample(x, x / eps1, values[i]);
  }
  nu.normalize();
  return nu;
}

double pair_with_integrand(const EmpiricalYoungMeasure& nu, const Integrand& phi) {
  if (nu.clipped_fraction() > nu.clip_threshold())
    throw ClippedMassError("value box clips too much mass", nu.clipped_fraction());
  const double cell_weight = (nu.x_hi() - nu.x_lo()) / (static_cast<double>(nu.nx()) * nu.ns());
  double total = 0.0;
  for (int i = 0; i < nu.nx(); ++i)
    for (int j = 0; j < nu.ns(); ++j) {
      double inner = 0.0;
      for (int k = 0; k < nu.nl(); ++k) {
        const double w = nu.weight(i, j, k);
        if (w != 0.0) inner += w * phi(nu.x_center(i), nu.s_center(j), nu.lambda_center(k));
      }
      total += inner * cell_weight;
    }
  return total;
}

std::vector<double> barycenter_grid(const EmpiricalYoungMeasure& nu) {
  std::vector<double> grid(static_cast<std::size_t>(nu.nx()) * nu.ns(), 0.0);
  for (int i = 0; i < nu.nx(); ++i)
    for (int j = 0; j < nu.ns(); ++j) {
      double b = 0.0;
      for (int k = 0; k < nu.nl(); ++k) b += nu.weight(i, j, k) * nu.lambda_center(k);
      grid[static_cast<std::size_t>(i * nu.ns() + j)] = b;
    }
  return grid;
}

TwoScaleFunction barycenter(const EmpiricalYoungMeasure& nu) {
  auto grid = std::make_shared<const std::vector<double>>(barycenter_grid(nu));
  const double lo = nu.x_lo(), hi = nu.x_hi(), period = nu.period();
  const int nx = nu.nx(), ns = nu.ns();
  sigma::MacroDomain domain{{lo}, {hi}, std::nullopt};
  auto eval = [grid, lo, hi, period, nx, ns](std::span<const double> X, std::span<const double> y, double) {
    const int i = std::clamp(static_cast<int>((X[0] - lo) / (hi - lo) * nx), 0, nx - 1);
    const int j = std::clamp(static_cast<int>(wrap(y[0], period) / period * ns), 0, ns - 1);
    return (*grid)[static_cast<std::size_t>(i * ns + j)];
  };
  return TwoScaleFunction(domain, fields::CellGeometry::periodic(1, {period}), eval);
}

namespace {

// Average of |g| over the (i, j) bin rectangle by tensor Gauss-Legendre.
template <class G>
double bin_average(const EmpiricalYoungMeasure& nu, int i, int j, G&& g) {
  const double hx = (nu.x_hi() - nu.x_lo()) / nu.nx();
  const double hs = nu.period() / nu.ns();
  const double x0 = nu.x_lo() + i * hx, s0 = j * hs;
  auto inner = [&](double x) {
    return quad::integrate([&](double s) { return g(x, s); }, s0, s0 + hs, 4);
  };
  return quad::integrate(inner, x0, x0 + hx, 4) / (hx * hs);
}

double eval2(const TwoScaleFunction& v, double x, double s) {
  return v(std::span<const double>(&x, 1), std::span<const double>(&s, 1));
}

}  // namespace

double barycenter_deviation(const EmpiricalYoungMeasure& nu, const TwoScaleFunction& target) {
  const auto grid = barycenter_grid(nu);
  double worst = 0.0;
  for (int i = 0; i < nu.nx(); ++i)
    for (int j = 0; j < nu.ns(); ++j) {
      if (nu.count(i, j) == 0) continue;
      const double avg = bin_average(nu, i, j, [&](double x, double s) { return eval2(target, x, s); });
      worst = std::max(worst, std::abs(grid[static_cast<std::size_t>(i * nu.ns() + j)] - avg));
    }
  return worst;
}

DiracResult dirac_test(const EmpiricalYoungMeasure& nu, const OscillatorySequence& seq, const TwoScaleFunction& v,
                       double tol) {
  require_scalar_interval(seq);
  const double cell_weight = (nu.x_hi() - nu.x_lo()) / (static_cast<double>(nu.nx()) * nu.ns());
  DiracResult r;
  double blur = 0.0;
  for (int i = 0; i < nu.nx(); ++i)
    for (int j = 0; j < nu.ns(); ++j) {
      const double vc = eval2(v, nu.x_center(i), nu.s_center(j));
      double spread = 0.0;
      for (int k = 0; k < nu.nl(); ++k) spread += nu.weight(i, j, k) * std::abs(nu.lambda_center(k) - vc);
      r.l1_distance += spread * cell_weight;
      blur += cell_weight *
              bin_average(nu, i, j, [&](double x, double s) { return std::abs(eval2(v, x, s) - vc); });
    }
  r.resolution = 0.5 * nu.lambda_width() * (nu.x_hi() - nu.x_lo()) + blur;
  r.is_dirac = r.l1_distance <= tol + r.resolution;

  const std::size_t m = static_cast<std::size_t>(nu.total_samples());
  const double eps1 = seq.eps1()(nu.eps());
  double direct = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double x = sample_x(nu.x_lo(), nu.x_hi(), i, m);
    direct += std::abs(seq(std::span<const double>(&x, 1), nu.eps()) - eval2(v, x, wrap(x / eps1, nu.period())));
  }
  r.direct_l1 = direct * (nu.x_hi() - nu.x_lo()) / static_cast<double>(m);
  return r;
}

LscReport check_lsc(const EmpiricalYoungMeasure& nu, const Integrand& phi, const OscillatorySequence& seq,
                    const std::vector<double>& epsilons, std::optional<double> tolerance) {
  require_scalar_interval(seq);
  if (epsilons.empty()) throw UsageError("check_lsc needs at least one eps");
  LscReport rep;
  rep.lhs = pair_with_integrand(nu, phi);
  if (tolerance) {
    rep.tolerance = *tolerance;
  } else {
    // Variation of phi across half a bin in each of x, s and lambda.
    const double hx = 0.5 * (nu.x_hi() - nu.x_lo()) / nu.nx(), hs = 0.5 * nu.period() / nu.ns();
    const double hl = 0.5 * nu.lambda_width();
    const Integrand spread = [&](double x, double y, double l) {
      const double c = phi(x, y, l);
      double dx = 0, ds = 0, dl = 0;
      for (double sg : {-1.0, 1.0}) {
        dx = std::max(dx, std::abs(phi(x + sg * hx, y, l) - c));
        ds = std::max(ds, std::abs(phi(x, y + sg * hs, l) - c));
        dl = std::max(dl, std::abs(phi(x, y, l + sg * hl) - c));
      }
      return dx + ds + dl;
    };
    rep.tolerance = std::max(pair_with_integrand(nu, spread), nu.lambda_width());
  }
  rep.epsilons = epsilons;
  const auto& d = seq.domain();
  const double lo = d.lo[0], hi = d.hi[0];
  const double freq = std::max(seq.cell_frequency(), 1.0);
  const double macro = std::max(seq.macro_frequency(), 1.0);
  for (double eps : epsilons) {
    const double eps1 = seq.eps1()(eps);
    const double width = std::min({(hi - lo) / 16, eps1 / (8 * freq), 1.0 / (8 * macro)});
    auto f = [&](double x) {
      const double u = seq(std::span<const double>(&x, 1), eps);
      return phi(x, wrap(x / eps1, nu.period()), u);
    };
    rep.rhs.push_back(quad::integrate(f, lo, hi, quad::panels_for(hi - lo, width)));
  }
  const std::size_t tail = std::min<std::size_t>(3, rep.rhs.size());
  const double tail_min = *std::min_element(rep.rhs.end() - static_cast<std::ptrdiff_t>(tail), rep.rhs.end());
  rep.holds = rep.lhs <= tail_min + rep.tolerance;
  return rep;
}

std::string to_csv(const EmpiricalYoungMeasure& nu) {
  std::string out = "x_bin,s_bin,lambda_bin,weight\n";
  for (int i = 0; i < nu.nx(); ++i)
    for (int j = 0; j < nu.ns(); ++j)
      for (int k = 0; k < nu.nl(); ++k) {
        const double w = nu.weight(i, j, k);
        if (w == 0.0) continue;
        append_number(out, i);
        out += ',';
        append_number(out, j);
        out += ',';
        append_number(out, k);
        out += ',';
        append_number(out, w);
        out += '\n';
      }
  return out;
}

nlohmann::json summary_json(const EmpiricalYoungMeasure& nu) {
  const auto bary = barycenter_grid(nu);
  nlohmann::json b = nlohmann::json::array(), spread = nlohmann::json::array(), counts = nlohmann::json::array();
  for (int i = 0; i < nu.nx(); ++i) {
    nlohmann::json br = nlohmann::json::array(), sr = nlohmann::json::array(), cr = nlohmann::json::array();
    for (int j = 0; j < nu.ns(); ++j) {
      const double c = bary[static_cast<std::size_t>(i * nu.ns() + j)];
      double s = 0.0;
      for (int k = 0; k < nu.nl(); ++k) s += nu.weight(i, j, k) * std::abs(nu.lambda_center(k) - c);
      br.push_back(c);
      sr.push_back(s);
      cr.push_back(nu.count(i, j));
    }
    b.push_back(br);
    spread.push_back(sr);
    counts.push_back(cr);
  }
  return {{"x_bins", nu.nx()},
          {"s_bins", nu.ns()},
          {"lambda_bins", nu.nl()},
          {"interval", {nu.x_lo(), nu.x_hi()}},
          {"period", nu.period()},
          {"value_box", {nu.box().first, nu.box().second}},
          {"eps", nu.eps()},
          {"samples", nu.total_samples()},
          {"clipped_fraction", nu.clipped_fraction()},
          {"starved", nu.starved()},
          {"barycenter", b},
          {"spread", spread},
          {"counts", counts}};
}

}  // namespace homog::young
