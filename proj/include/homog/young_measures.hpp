#pragma once

// Empirical Young measures nu_{x,s} of scalar oscillating sequences on an
// interval: histograms over (x-bin, cell-bin, value-bin).

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "homog/sigma_limits.hpp"

namespace homog::young {

using sigma::OscillatorySequence;
using sigma::TwoScaleFunction;

struct Bins {
  int nx = 16;
  int ns = 32;
  int nl = 64;
  int min_samples = 200;
  double pad = 0.1;
  /// Fraction of samples allowed outside an explicit value box.
  double clip_threshold = 1e-3;
  std::optional<std::pair<double, double>> box;
  int threads = 1;
};

class EmpiricalYoungMeasure {
 public:
  EmpiricalYoungMeasure(double x_lo, double x_hi, double period, std::pair<double, double> box, int nx, int ns, int nl);

  int nx() const { return nx_; }
  int ns() const { return ns_; }
  int nl() const { return nl_; }
  double x_lo() const { return x_lo_; }
  double x_hi() const { return x_hi_; }
  double period() const { return period_; }
  std::pair<double, double> box() const { return box_; }
  double lambda_width() const { return (box_.second - box_.first) / nl_; }
  double x_center(int i) const { return x_lo_ + (i + 0.5) * (x_hi_ - x_lo_) / nx_; }
  double s_center(int j) const { return (j + 0.5) * period_ / ns_; }
  double lambda_center(int k) const { return box_.first + (k + 0.5) * lambda_width(); }

  /// Normalised weight nu[x][s][lambda] (zero for empty (x, s) cells).
  double weight(int i, int j, int k) const { return weights_[index(i, j, k)]; }
  long count(int i, int j) const { return counts_[static_cast<std::size_t>(i * ns_ + j)]; }
  long total_samples() const { return total_; }
  long clipped_samples() const { return clipped_; }
  double clipped_fraction() const { return total_ ? static_cast<double>(clipped_) / static_cast<double>(total_) : 0.0; }
  double clip_threshold() const { return clip_threshold_; }
  int min_samples() const { return min_samples_; }
  double eps() const { return eps_; }
  /// True where an (x, s) cell received fewer than the minimum sample count.
  std::vector<bool> starvation_mask() const;
  bool starved() const;

  /// Largest |sum_lambda nu - 1| over populated cells.
  double normalization_defect() const;
  /// Whether every cell-bin marginal count is within 3 binomial sigma of uniform.
  bool beta_marginal_uniform() const;

  void add_sample(double x, double s, double value);
  void normalize();
  void set_meta(double eps, int min_samples, double clip_threshold);

 private:
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * ns_ + static_cast<std::size_t>(j)) * nl_ + static_cast<std::size_t>(k);
  }
  double x_lo_, x_hi_, period_;
  std::pair<double, double> box_;
  int nx_, ns_, nl_;
  std::vector<double> weights_;
  std::vector<long> counts_;
  long total_ = 0, clipped_ = 0;
  double eps_ = 0.0;
  int min_samples_ = 0;
  double clip_threshold_ = 1e-3;
};

/// Samples u_eps on a uniform midpoint grid of Q dense enough for
/// `bins.min_samples` per (x, s) cell. The value box comes from a pilot pass
/// unless given explicitly.
EmpiricalYoungMeasure estimate_young_measure(const OscillatorySequence& seq, double eps, const Bins& bins = {});

using Integrand = std::function<double(double x, double y, double lambda)>;

/// sum over bins of Phi(x_c, s_c, lambda_c) nu |Q| / (nx ns). Throws
/// ClippedMassError when the clipped fraction exceeds the threshold.
double pair_with_integrand(const EmpiricalYoungMeasure& nu, const Integrand& phi);

/// u0(x, s) = sum_lambda lambda_c nu, piecewise constant on the bin grid.
std::vector<double> barycenter_grid(const EmpiricalYoungMeasure& nu);
TwoScaleFunction barycenter(const EmpiricalYoungMeasure& nu);

/// Largest deviation between the barycenter and the (x, s)-bin averages of a
/// two-scale target.
double barycenter_deviation(const EmpiricalYoungMeasure& nu, const TwoScaleFunction& target);

struct DiracResult {
  bool is_dirac = false;
  double l1_distance = 0.0;  // int_Q int_cell int |lambda - v(x, s)| dnu
  double resolution = 0.0;   // half value-bin width plus the bin-blur of v itself
  double direct_l1 = 0.0;    // || u_eps - v^eps ||_{L^1(Q)} from the samples
};

DiracResult dirac_test(const EmpiricalYoungMeasure& nu, const OscillatorySequence& seq, const TwoScaleFunction& v,
                       double tol);

struct LscReport {
  double lhs = 0.0;              // pairing with the measure
  std::vector<double> epsilons;  // tail of the sequence
  std::vector<double> rhs;       // int Phi(x, x/eps, u_eps)
  double tolerance = 0.0;
  bool holds = false;
};

/// lhs <= min over the last three rhs + tolerance. The default tolerance is the
/// pairing of phi's variation across half a bin in x, s and lambda (at least
/// one value-bin width).
LscReport check_lsc(const EmpiricalYoungMeasure& nu, const Integrand& phi, const OscillatorySequence& seq,
                    const std::vector<double>& epsilons, std::optional<double> tolerance = std::nullopt);

std::string to_csv(const EmpiricalYoungMeasure& nu);
nlohmann::json summary_json(const EmpiricalYoungMeasure& nu);

}  // namespace homog::young
