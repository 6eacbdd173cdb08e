#pragma once

// Discrete m-dimensional standard Wiener increments on a uniform time grid.

#include <cstdint>
#include <span>
#include <vector>

namespace homog::wiener {

class WienerPath {
 public:
  /// Draws steps * m standard normals from a seeded engine, scaled by sqrt(dt).
  WienerPath(std::uint64_t seed, int dimension, int steps, double dt);

  /// Path with no randomness (all increments zero).
  static WienerPath zero(int dimension, int steps, double dt);

  std::uint64_t seed() const { return seed_; }
  int dimension() const { return m_; }
  int steps() const { return steps_; }
  double dt() const { return dt_; }

  /// Increments of step n (length m).
  std::span<const double> increment(int n) const;
  /// W(t_n) for every component, n = 0..steps.
  std::vector<double> value(int n) const;

  /// Path on the grid with twice the step, built by summing adjacent pairs.
  /// Requires an even step count.
  WienerPath coarsen() const;

 private:
  WienerPath() = default;
  std::uint64_t seed_ = 0;
  int m_ = 1, steps_ = 0;
  double dt_ = 0.0;
  std::vector<double> dw_;
};

}  // namespace homog::wiener
