#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "homog/error.hpp"

namespace homog::quad {

/// Four-point Gauss-Legendre rule on [-1, 1].
struct Rule {
  std::array<double, 4> nodes;
  std::array<double, 4> weights;
};

inline const Rule& gauss_legendre4() {
  static const Rule rule = [] {
    using G = boost::math::quadrature::gauss<double, 4>;
    const auto& x = G::abscissa();
    const auto& w = G::weights();
    return Rule{{-x[1], -x[0], x[0], x[1]}, {w[1], w[0], w[0], w[1]}};
  }();
  return rule;
}

/// Smallest panel count such that every panel is at most `max_width` wide.
inline std::size_t panels_for(double length, double max_width) {
  if (!(max_width > 0.0)) throw UsageError("quadrature panel width must be positive");
  const double n = std::ceil(length / max_width - 1e-9);
  return n < 1.0 ? 1 : static_cast<std::size_t>(n);
}

/// Composite four-point Gauss-Legendre rule on [a, b] with equal panels.
template <class F>
double integrate(F&& f, double a, double b, std::size_t panels) {
  const Rule& r = gauss_legendre4();
  const double h = (b - a) / static_cast<double>(panels);
  double total = 0.0;
  for (std::size_t k = 0; k < panels; ++k) {
    const double mid = a + (static_cast<double>(k) + 0.5) * h;
    double panel = 0.0;
    for (int q = 0; q < 4; ++q) panel += r.weights[q] * f(mid + 0.5 * h * r.nodes[q]);
    total += 0.5 * h * panel;
  }
  return total;
}

/// Composite rule on [a, b] whose panel boundaries include every point of
/// `breaks` that falls inside the interval; each sub-interval is split into
/// panels no wider than `max_width`.
template <class F>
double integrate_with_breaks(F&& f, double a, double b, std::span<const double> breaks, double max_width) {
  std::vector<double> cuts{a};
  for (double c : breaks)
    if (c > a && c < b) cuts.push_back(c);
  cuts.push_back(b);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    total += integrate(f, cuts[i], cuts[i + 1], panels_for(cuts[i + 1] - cuts[i], max_width));
  return total;
}

/// Tensor-product composite rule over an axis-aligned box. `f` receives the
/// quadrature point as a span of length `lo.size()`.
template <class F>
double integrate_box(F&& f, std::span<const double> lo, std::span<const double> hi,
                     std::span<const std::size_t> panels) {
  const std::size_t dim = lo.size();
  if (hi.size() != dim || panels.size() != dim) throw UsageError("integrate_box: dimension mismatch");
  const Rule& r = gauss_legendre4();
  std::vector<double> h(dim);
  std::size_t total_points = 1;
  for (std::size_t d = 0; d < dim; ++d) {
    h[d] = (hi[d] - lo[d]) / static_cast<double>(panels[d]);
    total_points *= panels[d] * 4;
  }
  std::vector<std::size_t> idx(dim, 0);  // combined panel*4 + node index per axis
  std::vector<double> point(dim);
  double total = 0.0;
  for (std::size_t n = 0; n < total_points; ++n) {
    double w = 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const std::size_t panel = idx[d] / 4;
      const std::size_t node = idx[d] % 4;
      point[d] = lo[d] + (static_cast<double>(panel) + 0.5 + 0.5 * r.nodes[node]) * h[d];
      w *= 0.5 * h[d] * r.weights[node];
    }
    total += w * f(std::span<const double>(point));
    for (std::size_t d = dim; d-- > 0;) {
      if (++idx[d] < panels[d] * 4) break;
      idx[d] = 0;
    }
  }
  return total;
}

}  // namespace homog::quad
