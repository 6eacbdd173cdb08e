#include "homog/wiener.hpp"

#include <cmath>
#include <random>

#include "homog/error.hpp"

namespace homog::wiener {

WienerPath::WienerPath(std::uint64_t seed, int dimension, int steps, double dt)
    : seed_(seed), m_(dimension), steps_(steps), dt_(dt) {
  if (dimension < 1) throw UsageError("Wiener dimension must be positive");
  if (steps < 0) throw UsageError("Wiener step count must be non-negative");
  if (!(dt > 0)) throw UsageError("Wiener time step must be positive");
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = std::sqrt(dt);
  dw_.resize(static_cast<std::size_t>(steps) * static_cast<std::size_t>(dimension));
  for (double& v : dw_) v = scale * normal(engine);
}

WienerPath WienerPath::zero(int dimension, int steps, double dt) {
  WienerPath w;
  w.m_ = dimension;
  w.steps_ = steps;
  w.dt_ = dt;
  w.dw_.assign(static_cast<std::size_t>(steps) * static_cast<std::size_t>(dimension), 0.0);
  return w;
}

std::span<const double> WienerPath::increment(int n) const {
  if (n < 0 || n >= steps_) throw UsageError("Wiener step " + std::to_string(n) + " out of range");
  return {dw_.data() + static_cast<std::size_t>(n) * static_cast<std::size_t>(m_), static_cast<std::size_t>(m_)};
}

std::vector<double> WienerPath::value(int n) const {
  if (n < 0 || n > steps_) throw UsageError("Wiener time index out of range");
  std::vector<double> w(static_cast<std::size_t>(m_), 0.0);
  for (int k = 0; k < n; ++k) {
    const auto dw = increment(k);
    for (int i = 0; i < m_; ++i) w[static_cast<std::size_t>(i)] += dw[static_cast<std::size_t>(i)];
  }
  return w;
}

WienerPath WienerPath::coarsen() const {
  if (steps_ % 2 != 0) throw UsageError("coarsening needs an even number of steps");
  WienerPath w;
  w.seed_ = seed_;
  w.m_ = m_;
  w.steps_ = steps_ / 2;
  w.dt_ = 2 * dt_;
  w.dw_.resize(static_cast<std::size_t>(w.steps_) * static_cast<std::size_t>(m_));
  for (int n = 0; n < w.steps_; ++n)
    for (int i = 0; i < m_; ++i) {
      const auto a = increment(2 * n), b = increment(2 * n + 1);
      w.dw_[static_cast<std::size_t>(n * m_ + i)] = a[static_cast<std::size_t>(i)] + b[static_cast<std::size_t>(i)];
    }
  return w;
}

}  // namespace homog::wiener
