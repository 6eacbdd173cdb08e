#include "homog/correctors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>

#include "homog/error.hpp"
#include "homog/json_util.hpp"
#include "homog/parallel.hpp"
#include "homog/quadrature.hpp"

namespace homog::correctors {

namespace ju = json_util;
using discrete::Vector;

namespace {

const fields::CellGeometry& field_geometry(const MonotoneCellOperator& op) {
  if (op.a && !op.a->empty()) return op.a->front().geometry();
  if (op.b) return op.b->geometry();
  throw InvalidOperator("cell operator has neither a linear nor a power part");
}

std::vector<double> periods_of(const fields::CellGeometry& g) {
  if (g.kind() != fields::CellKind::PeriodicTorus)
    throw UnsupportedOperation("grid cell solver needs a periodic cell, got " + fields::to_string(g.kind()));
  std::vector<double> p = g.periods();
  if (p.empty()) p.assign(static_cast<std::size_t>(g.dimension()), 1.0);
  return p;
}

double cell_volume(const std::vector<double>& periods) {
  double v = 1.0;
  for (double p : periods) v *= p;
  return v;
}

std::vector<double> tau_grid(const MonotoneCellOperator& op, int points) {
  const auto T = op.time_period();
  if (!T) return {0.0};
  if (points < 1) throw UsageError("tau_points must be positive");
  std::vector<double> taus;
  for (int k = 0; k < points; ++k) taus.push_back((k + 0.5) * *T / points);
  return taus;
}

// Probe points covering the cell (regular grid with per_axis points).
std::vector<std::vector<double>> probe_grid(const fields::CellGeometry& g, int per_axis) {
  std::vector<double> periods = g.periods();
  if (periods.empty()) periods.assign(static_cast<std::size_t>(g.dimension()), 1.0);
  std::vector<std::vector<double>> pts;
  if (g.kind() == fields::CellKind::SlowOscillation) {
    for (int i = -per_axis * 8; i <= per_axis * 8; ++i) pts.push_back({i * 7.3});
    return pts;
  }
  if (g.kind() == fields::CellKind::Quasiperiodic) periods.assign(static_cast<std::size_t>(g.dimension()), 10.0);
  if (g.dimension() == 1) {
    for (int i = 0; i < per_axis; ++i) pts.push_back({(i + 0.37) * periods[0] / per_axis});
  } else {
    for (int i = 0; i < per_axis; ++i)
      for (int j = 0; j < per_axis; ++j)
        pts.push_back({(i + 0.37) * periods[0] / per_axis, (j + 0.61) * periods[1] / per_axis});
  }
  return pts;
}

double eval(const OscillatoryField& f, std::span<const double> y, double tau) {
  return f.time_factor() ? f(y, tau) : f(y);
}

std::vector<double> node_values(const discrete::Mesh& mesh, const Vector& z) {
  const Vector s = mesh.C * z;
  return std::vector<double>(s.data(), s.data() + s.size());
}

// Interior break points of piecewise-constant 1D fields in cell coordinates.
void collect_breaks(const OscillatoryField& f, double period, std::vector<double>& out) {
  if (const auto* pc = std::get_if<fields::PiecewiseConstant>(&f.generator())) {
    const double off = f.offset().empty() ? 0.0 : f.offset()[0];
    for (double b : pc->breaks.at(0)) {
      double y = std::fmod(b - off, period);
      if (y < 0) y += period;
      out.push_back(y);
    }
  }
}

struct SliceResult {
  CellSlice slice;
  double energy = 0.0;
  double divergence = 0.0;
};

SliceResult solve_slice(const MonotoneCellOperator& op, std::span<const double> xi, double tau,
                        const std::shared_ptr<const discrete::Mesh>& mesh, const std::vector<double>& periods,
                        const CellOptions& opts) {
  const discrete::Mesh& m = *mesh;
  const int r = m.r;
  std::vector<double> A, b;
  A.reserve(m.elements * r * r);
  b.reserve(m.elements);
  for (const auto& pt : m.points) {
    const auto t = op.tensor(pt, tau);
    A.insert(A.end(), t.begin(), t.end());
    b.push_back(op.power_coefficient(pt, tau));
  }
  discrete::PowerLawMaterial mat(r, std::move(A), std::move(b), op.b ? op.p : 2.0);
  discrete::Minimizer solver(mesh);
  Vector z0;
  if (opts.initial_perturbation != 0.0) {
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    z0.resize(static_cast<Eigen::Index>(m.dofs()));
    for (auto& v : z0) v = opts.initial_perturbation * u(rng);
  }
  discrete::NewtonOptions newton = opts.newton;
  newton.tolerance = opts.tolerance;
  const std::vector<double> xiv(xi.begin(), xi.end());
  const auto res = solver.solve(mat, xiv, Vector(), Vector(), std::move(z0), newton);

  SliceResult out;
  out.slice.tau = tau;
  out.slice.residual = res.residual;
  out.slice.iterations = res.iterations;
  const Vector G = m.gradients(res.z, xiv);
  const double vol = cell_volume(periods);
  out.slice.m_xi.assign(static_cast<std::size_t>(r), 0.0);
  out.slice.M_xi.assign(static_cast<std::size_t>(r), 0.0);
  std::vector<double> lin(static_cast<std::size_t>(r)), pow(static_cast<std::size_t>(r));
  for (std::size_t e = 0; e < m.elements; ++e) {
    mat.split_flux(e, G.data() + e * r, lin.data(), pow.data());
    for (int i = 0; i < r; ++i) {
      out.slice.m_xi[static_cast<std::size_t>(i)] += m.weights[e] * lin[static_cast<std::size_t>(i)] / vol;
      out.slice.M_xi[static_cast<std::size_t>(i)] += m.weights[e] * pow[static_cast<std::size_t>(i)] / vol;
    }
    out.energy += m.weights[e] * mat.energy(e, G.data() + e * r) / vol;
  }
  out.slice.corrector = node_values(m, res.z);
  if (op.mode == Mode::Scalar) {
    double mean = 0.0;
    for (double v : out.slice.corrector) mean += v;
    mean /= static_cast<double>(out.slice.corrector.size());
    for (double& v : out.slice.corrector) v -= mean;
  } else {
    discrete::StaggeredGrid grid{opts.grid, periods[0] / opts.grid, periods[1] / opts.grid};
    const Vector s = m.C * res.z;
    out.divergence = grid.max_divergence(s);
  }
  return out;
}

CellSolution solve_impl(const MonotoneCellOperator& op, std::span<const double> xi, const CellOptions& opts) {
  if (static_cast<int>(xi.size()) != op.components())
    throw UsageError("xi has " + std::to_string(xi.size()) + " entries, operator expects " +
                     std::to_string(op.components()));
  if (opts.grid < 16) throw UsageError("cell grid needs at least 16 points per dimension");
  if (!(opts.tolerance > 0)) throw UsageError("cell tolerance must be positive");
  const auto periods = periods_of(op.geometry());
  std::shared_ptr<const discrete::Mesh> mesh;
  if (op.mode == Mode::Scalar)
    mesh = discrete::periodic_scalar_mesh(op.dimension, opts.grid, periods);
  else
    mesh = discrete::periodic_stream_mesh(opts.grid, periods, false);

  CellSolution sol;
  sol.mode = op.mode;
  sol.dimension = op.dimension;
  sol.grid = opts.grid;
  sol.periods = periods;
  sol.xi.assign(xi.begin(), xi.end());
  const auto taus = tau_grid(op, opts.tau_points);
  const std::size_t r = static_cast<std::size_t>(op.components());
  sol.m_xi.assign(r, 0.0);
  sol.M_xi.assign(r, 0.0);
  for (double tau : taus) {
    auto s = solve_slice(op, xi, tau, mesh, periods, opts);
    for (std::size_t i = 0; i < r; ++i) {
      sol.m_xi[i] += s.slice.m_xi[i] / static_cast<double>(taus.size());
      sol.M_xi[i] += s.slice.M_xi[i] / static_cast<double>(taus.size());
    }
    sol.energy += s.energy / static_cast<double>(taus.size());
    sol.residual = std::max(sol.residual, s.slice.residual);
    sol.iterations = std::max(sol.iterations, s.slice.iterations);
    sol.max_divergence = std::max(sol.max_divergence, s.divergence);
    sol.slices.push_back(std::move(s.slice));
  }
  sol.flux.resize(r);
  for (std::size_t i = 0; i < r; ++i) sol.flux[i] = sol.m_xi[i] + sol.M_xi[i];
  return sol;
}

}  // namespace

const fields::CellGeometry& MonotoneCellOperator::geometry() const { return field_geometry(*this); }

std::optional<double> MonotoneCellOperator::time_period() const {
  auto period_of = [](const OscillatoryField& f) -> std::optional<double> {
    if (!f.time_factor()) return std::nullopt;
    const auto& g = f.time_factor()->geometry();
    return g.periods().empty() ? 1.0 : g.periods()[0];
  };
  std::optional<double> T;
  auto merge = [&](const OscillatoryField& f) {
    const auto p = period_of(f);
    if (!p) return;
    if (T && std::abs(*T - *p) > 1e-12 * *T) throw GeometryMismatch("coefficients disagree on the time-cell period");
    T = p;
  };
  if (a)
    for (const auto& f : *a) merge(f);
  if (b) merge(*b);
  return T;
}

std::vector<double> MonotoneCellOperator::tensor(std::span<const double> y, double tau) const {
  const int N = dimension;
  const int r = components();
  std::vector<double> out(static_cast<std::size_t>(r * r), 0.0);
  if (!a) return out;
  std::vector<double> t(static_cast<std::size_t>(N * N), 0.0);
  if (a->size() == 1) {
    const double v = eval(a->front(), y, tau);
    for (int i = 0; i < N; ++i) t[static_cast<std::size_t>(i * N + i)] = v;
  } else if (static_cast<int>(a->size()) == N * N) {
    for (int k = 0; k < N * N; ++k) t[static_cast<std::size_t>(k)] = eval((*a)[static_cast<std::size_t>(k)], y, tau);
  } else {
    throw InvalidOperator("tensor a needs 1 or N*N entries");
  }
  const int blocks = mode == Mode::Scalar ? 1 : N;
  for (int blk = 0; blk < blocks; ++blk)
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        out[static_cast<std::size_t>((blk * N + i) * r + blk * N + j)] = t[static_cast<std::size_t>(i * N + j)];
  return out;
}

double MonotoneCellOperator::power_coefficient(std::span<const double> y, double tau) const {
  return b ? eval(*b, y, tau) : 0.0;
}

bool MonotoneCellOperator::constant_coefficients() const {
  const auto pts = probe_grid(geometry(), std::max(8, probe_points));
  const auto taus = tau_grid(*this, 8);
  const auto t0 = tensor(pts.front(), taus.front());
  const double b0 = power_coefficient(pts.front(), taus.front());
  for (const auto& y : pts)
    for (double tau : taus) {
      const auto t = tensor(y, tau);
      for (std::size_t k = 0; k < t.size(); ++k)
        if (std::abs(t[k] - t0[k]) > 1e-13 * (1 + std::abs(t0[k]))) return false;
      if (std::abs(power_coefficient(y, tau) - b0) > 1e-13 * (1 + std::abs(b0))) return false;
    }
  return true;
}

void MonotoneCellOperator::validate() const {
  if (dimension < 1 || dimension > 2) throw InvalidOperator("cell dimension must be 1 or 2");
  if (mode == Mode::Vector && dimension != 2) throw InvalidOperator("vector mode is two-dimensional");
  if (!a && !b) throw InvalidOperator("cell operator has neither a linear nor a power part");
  if (b && !(p >= 3.0)) throw InvalidOperator("power exponent p must be at least 3");
  const auto& g = geometry();
  if (g.dimension() != dimension) throw GeometryMismatch("coefficient geometry dimension differs from the operator");
  if (a)
    for (const auto& f : *a)
      if (!(f.geometry() == g)) throw GeometryMismatch("coefficients live on different cells");
  if (b && !(b->geometry() == g)) throw GeometryMismatch("coefficients live on different cells");
  time_period();

  const int N = dimension;
  const auto pts = probe_grid(g, probe_points);
  const auto taus = tau_grid(*this, 8);
  for (const auto& y : pts)
    for (double tau : taus) {
      if (a) {
        const auto t = tensor(y, tau);
        const int r = components();
        Eigen::MatrixXd M(N, N);
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < N; ++j) M(i, j) = t[static_cast<std::size_t>(i * r + j)];
        if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1 + M.cwiseAbs().maxCoeff()))
          throw InvalidOperator("tensor a is not symmetric at a probe point");
        const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M).eigenvalues().minCoeff();
        if (!(lmin > 0) || lmin < nu0) throw InvalidOperator("coercivity of a fails at a probe point");
      }
      if (b) {
        const double v = power_coefficient(y, tau);
        if (!(v > 0)) throw InvalidOperator("b must be positive on the cell");
        if (c1 > 0 && (v < c1 * (1 - 1e-12) || v > (1 + 1e-12) / c1))
          throw InvalidOperator("b leaves [c1, 1/c1] at a probe point");
      }
    }
}

CellSolution solve_cell_problem(const MonotoneCellOperator& op, std::span<const double> xi, const CellOptions& opts) {
  op.validate();
  return solve_impl(op, xi, opts);
}

CellSolution solve_cell_1d_closed_form(const MonotoneCellOperator& op, double xi, int nodes, int tau_points) {
  if (op.mode != Mode::Scalar || op.dimension != 1) throw UsageError("closed form needs a 1D scalar operator");
  op.validate();
  const double P = periods_of(op.geometry())[0];
  const double p = op.p;
  std::vector<double> breaks;
  if (op.a) collect_breaks(op.a->front(), P, breaks);
  if (op.b) collect_breaks(*op.b, P, breaks);
  std::sort(breaks.begin(), breaks.end());

  // Quadrature nodes of the cell with break-aligned panels.
  std::vector<double> qy, qw;
  {
    std::vector<double> cuts{0.0};
    for (double c : breaks)
      if (c > 0 && c < P) cuts.push_back(c);
    cuts.push_back(P);
    const auto& rule = quad::gauss_legendre4();
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const std::size_t panels = quad::panels_for(cuts[k + 1] - cuts[k], P / 512);
      const double h = (cuts[k + 1] - cuts[k]) / static_cast<double>(panels);
      for (std::size_t j = 0; j < panels; ++j)
        for (int q = 0; q < 4; ++q) {
          qy.push_back(cuts[k] + (static_cast<double>(j) + 0.5 + 0.5 * rule.nodes[q]) * h);
          qw.push_back(0.5 * h * rule.weights[q] / P);
        }
    }
  }

  auto s_of = [&](double av, double bv, double c) {
    if (c == 0.0) return 0.0;
    if (!(av > 0) && !(bv > 0)) throw InvalidOperator("operator vanishes at a quadrature point");
    double S = std::numeric_limits<double>::infinity();
    if (av > 0) S = std::abs(c) / av;
    if (bv > 0) S = std::min(S, std::pow(std::abs(c) / bv, 1.0 / (p - 1)));
    S *= 1.0 + 1e-12;
    auto f = [&](double s) { return av * s + bv * std::pow(std::abs(s), p - 2) * s - c; };
    boost::uintmax_t it = 200;
    const double lo = c > 0 ? 0.0 : -S, hi = c > 0 ? S : 0.0;
    const auto [x0, x1] = boost::math::tools::toms748_solve(f, lo, hi, f(lo), f(hi),
                                                            boost::math::tools::eps_tolerance<double>(52), it);
    return 0.5 * (x0 + x1);
  };

  const auto taus = tau_grid(op, tau_points);
  CellSolution sol;
  sol.mode = Mode::Scalar;
  sol.dimension = 1;
  sol.grid = nodes;
  sol.periods = {P};
  sol.xi = {xi};
  sol.m_xi = {0.0};
  sol.M_xi = {0.0};
  sol.flux = {0.0};
  for (double tau : taus) {
    std::vector<double> av(qy.size()), bv(qy.size());
    for (std::size_t k = 0; k < qy.size(); ++k) {
      const double y = qy[k];
      av[k] = op.a ? eval(op.a->front(), std::span<const double>(&y, 1), tau) : 0.0;
      bv[k] = op.power_coefficient(std::span<const double>(&y, 1), tau);
    }
    int evaluations = 0;
    auto mean_s = [&](double c) {
      ++evaluations;
      double total = 0.0;
      for (std::size_t k = 0; k < qy.size(); ++k) total += qw[k] * s_of(av[k], bv[k], c);
      return total - xi;
    };
    double c = 0.0;
    if (xi != 0.0) {
      const double sign = xi > 0 ? 1.0 : -1.0;
      double lo = 0.0, hi = sign;
      while (mean_s(hi) * sign < 0) {
        lo = hi;
        hi *= 2;
        if (std::abs(hi) > 1e300) throw Error("closed form: flux bracket failed");
      }
      boost::uintmax_t it = 200;
      const double a0 = std::min(lo, hi), a1 = std::max(lo, hi);
      const auto [c0, c1] = boost::math::tools::toms748_solve(mean_s, a0, a1, mean_s(a0), mean_s(a1),
                                                              boost::math::tools::eps_tolerance<double>(50), it);
      c = 0.5 * (c0 + c1);
    }
    CellSlice slice;
    slice.tau = tau;
    slice.iterations = evaluations;
    double mlin = 0.0, mpow = 0.0, energy = 0.0;
    for (std::size_t k = 0; k < qy.size(); ++k) {
      const double s = s_of(av[k], bv[k], c);
      const double pw = bv[k] * std::pow(std::abs(s), p - 2) * s;
      mlin += qw[k] * av[k] * s;
      mpow += qw[k] * pw;
      energy += qw[k] * (0.5 * av[k] * s * s + bv[k] / p * std::pow(std::abs(s), p));
    }
    slice.m_xi = {mlin};
    slice.M_xi = {mpow};
    // Corrector by integrating s - xi between nodes.
    slice.corrector.assign(static_cast<std::size_t>(nodes), 0.0);
    double acc = 0.0;
    for (int k = 1; k < nodes; ++k) {
      const double y0 = (k - 1) * P / nodes, y1 = k * P / nodes;
      auto integrand = [&](double y) {
        const double a_y = op.a ? eval(op.a->front(), std::span<const double>(&y, 1), tau) : 0.0;
        const double b_y = op.power_coefficient(std::span<const double>(&y, 1), tau);
        return s_of(a_y, b_y, c) - xi;
      };
      acc += quad::integrate_with_breaks(integrand, y0, y1, breaks, (y1 - y0) / 2);
      slice.corrector[static_cast<std::size_t>(k)] = acc;
    }
    double mean = 0.0;
    for (double v : slice.corrector) mean += v / nodes;
    for (double& v : slice.corrector) v -= mean;

    const double w = 1.0 / static_cast<double>(taus.size());
    sol.m_xi[0] += w * mlin;
    sol.M_xi[0] += w * mpow;
    sol.energy += w * energy;
    sol.iterations = std::max(sol.iterations, evaluations);
    sol.slices.push_back(std::move(slice));
  }
  sol.flux[0] = sol.m_xi[0] + sol.M_xi[0];
  return sol;
}

// ---------------------------------------------------------------------------

EffectiveModel EffectiveModel::closed(int r, std::vector<double> T, double beta, double p) {
  if (r < 1 || T.size() != static_cast<std::size_t>(r * r)) throw UsageError("closed model tensor has wrong size");
  if (beta != 0.0 && !(p >= 2.0)) throw UsageError("closed model exponent must be at least 2");
  EffectiveModel m;
  m.kind_ = Kind::Closed;
  m.r_ = r;
  m.T_ = std::move(T);
  m.beta_ = beta;
  m.p_ = p;
  return m;
}

EffectiveModel EffectiveModel::table(std::vector<std::vector<double>> axes, std::vector<double> mv,
                                     std::vector<double> Mv) {
  if (axes.empty()) throw UsageError("table needs at least one axis");
  EffectiveModel m;
  m.kind_ = Kind::Table;
  m.r_ = static_cast<int>(axes.size());
  for (const auto& ax : axes) {
    if (ax.empty()) throw UsageError("table axis is empty");
    if (ax.size() == 1 && ax[0] != 0.0) throw UsageError("single-sample axes must sit at 0");
    for (std::size_t k = 1; k < ax.size(); ++k)
      if (!(ax[k] > ax[k - 1])) throw UsageError("table axis samples must increase strictly");
  }
  m.axes_ = std::move(axes);
  const std::size_t n = m.points() * static_cast<std::size_t>(m.r_);
  if (mv.size() != n || Mv.size() != n) throw UsageError("table value count does not match the axes");
  m.m_ = std::move(mv);
  m.M_ = std::move(Mv);
  return m;
}

std::size_t EffectiveModel::points() const {
  std::size_t n = 1;
  for (const auto& ax : axes_) n *= ax.size();
  return n;
}

void EffectiveModel::split(const double* xi, double* m, double* M) const {
  const int r = r_;
  if (kind_ == Kind::Closed) {
    double s = 0.0;
    for (int i = 0; i < r; ++i) s += xi[i] * xi[i];
    const double scale = beta_ != 0.0 && s > 0 ? beta_ * std::pow(s, 0.5 * (p_ - 2)) : 0.0;
    for (int i = 0; i < r; ++i) {
      double row = 0.0;
      for (int j = 0; j < r; ++j) row += T_[static_cast<std::size_t>(i * r + j)] * xi[j];
      m[i] = row;
      M[i] = scale * xi[i];
    }
    return;
  }
  // Multilinear interpolation over the active axes.
  std::vector<std::size_t> base(static_cast<std::size_t>(r));
  std::vector<double> frac(static_cast<std::size_t>(r), 0.0);
  std::vector<int> active;
  for (int i = 0; i < r; ++i) {
    const auto& ax = axes_[static_cast<std::size_t>(i)];
    if (ax.size() == 1) {
      if (std::abs(xi[i]) > 1e-12) {
        throw RangeError("xi component " + std::to_string(i) + " = " + std::to_string(xi[i]) +
                         " is not tabulated (inactive axis)");
      }
      base[static_cast<std::size_t>(i)] = 0;
      continue;
    }
    const double span = ax.back() - ax.front();
    if (xi[i] < ax.front() - 1e-12 * span || xi[i] > ax.back() + 1e-12 * span) {
      throw RangeError("xi component " + std::to_string(i) + " = " + std::to_string(xi[i]) + " outside [" +
                       std::to_string(ax.front()) + ", " + std::to_string(ax.back()) + "]");
    }
    std::size_t k = static_cast<std::size_t>(std::upper_bound(ax.begin(), ax.end(), xi[i]) - ax.begin());
    k = std::clamp<std::size_t>(k, 1, ax.size() - 1) - 1;
    base[static_cast<std::size_t>(i)] = k;
    frac[static_cast<std::size_t>(i)] = std::clamp((xi[i] - ax[k]) / (ax[k + 1] - ax[k]), 0.0, 1.0);
    active.push_back(i);
  }
  for (int i = 0; i < r; ++i) m[i] = M[i] = 0.0;
  const std::size_t corners = std::size_t{1} << active.size();
  for (std::size_t c = 0; c < corners; ++c) {
    double w = 1.0;
    std::vector<std::size_t> idx = base;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto ax = static_cast<std::size_t>(active[a]);
      if (c >> a & 1) {
        idx[ax] += 1;
        w *= frac[ax];
      } else {
        w *= 1.0 - frac[ax];
      }
    }
    if (w == 0.0) continue;
    std::size_t flat = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(r); ++i) flat = flat * axes_[i].size() + idx[i];
    for (int i = 0; i < r; ++i) {
      m[i] += w * m_[flat * static_cast<std::size_t>(r) + static_cast<std::size_t>(i)];
      M[i] += w * M_[flat * static_cast<std::size_t>(r) + static_cast<std::size_t>(i)];
    }
  }
}

void EffectiveModel::flux(const double* xi, double* F) const {
  std::vector<double> M(static_cast<std::size_t>(r_));
  split(xi, F, M.data());
  for (int i = 0; i < r_; ++i) F[i] += M[static_cast<std::size_t>(i)];
}

void EffectiveModel::jacobian(const double* xi, double* J) const {
  const int r = r_;
  if (kind_ == Kind::Closed) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) J[j * r + i] = T_[static_cast<std::size_t>(i * r + j)];
    if (beta_ == 0.0) return;
    double s = 0.0;
    for (int i = 0; i < r; ++i) s += xi[i] * xi[i];
    if (s == 0.0) return;
    const double c0 = beta_ * std::pow(s, 0.5 * (p_ - 2)), c1 = beta_ * (p_ - 2) * std::pow(s, 0.5 * (p_ - 4));
    for (int i = 0; i < r; ++i) {
      J[i * r + i] += c0;
      for (int j = 0; j < r; ++j) J[j * r + i] += c1 * xi[i] * xi[j];
    }
    return;
  }
  // One-sided differences inside the current table cell (exact for the
  // multilinear interpolant).
  std::vector<double> lo(xi, xi + r), hi(xi, xi + r), Flo(static_cast<std::size_t>(r)), Fhi(static_cast<std::size_t>(r));
  for (int j = 0; j < r; ++j) {
    const auto& ax = axes_[static_cast<std::size_t>(j)];
    for (int i = 0; i < r; ++i) J[j * r + i] = 0.0;
    if (ax.size() == 1) continue;
    std::size_t k = static_cast<std::size_t>(std::upper_bound(ax.begin(), ax.end(), xi[j]) - ax.begin());
    k = std::clamp<std::size_t>(k, 1, ax.size() - 1) - 1;
    lo = std::vector<double>(xi, xi + r);
    hi = lo;
    lo[static_cast<std::size_t>(j)] = ax[k];
    hi[static_cast<std::size_t>(j)] = ax[k + 1];
    flux(lo.data(), Flo.data());
    flux(hi.data(), Fhi.data());
    for (int i = 0; i < r; ++i)
      J[j * r + i] = (Fhi[static_cast<std::size_t>(i)] - Flo[static_cast<std::size_t>(i)]) / (ax[k + 1] - ax[k]);
  }
}

double EffectiveModel::energy(const double* xi) const {
  if (kind_ != Kind::Closed) throw UnsupportedOperation("tabulated models carry no energy");
  const int r = r_;
  double quad = 0.0, s = 0.0;
  for (int i = 0; i < r; ++i) {
    double row = 0.0;
    for (int j = 0; j < r; ++j) row += T_[static_cast<std::size_t>(i * r + j)] * xi[j];
    quad += xi[i] * row;
    s += xi[i] * xi[i];
  }
  return 0.5 * quad + (beta_ != 0.0 ? beta_ / p_ * std::pow(s, 0.5 * p_) : 0.0);
}

double EffectiveModel::monotonicity_gap() const {
  if (kind_ == Kind::Closed) {
    Eigen::MatrixXd T(r_, r_);
    for (int i = 0; i < r_; ++i)
      for (int j = 0; j < r_; ++j) T(i, j) = T_[static_cast<std::size_t>(i * r_ + j)];
    Eigen::MatrixXd S = 0.5 * (T + T.transpose());
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S).eigenvalues().minCoeff();
  }
  const std::size_t n = points();
  const std::size_t r = static_cast<std::size_t>(r_);
  std::vector<std::vector<double>> xs(n, std::vector<double>(r));
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t rem = k;
    for (std::size_t i = r; i-- > 0;) {
      xs[k][i] = axes_[i][rem % axes_[i].size()];
      rem /= axes_[i].size();
    }
  }
  double worst = std::numeric_limits<double>::infinity();
  const std::size_t stride = n > 2000 ? n / 2000 + 1 : 1;
  for (std::size_t a = 0; a < n; a += stride)
    for (std::size_t b = a + 1; b < n; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < r; ++i)
        dot += (m_[a * r + i] + M_[a * r + i] - m_[b * r + i] - M_[b * r + i]) * (xs[a][i] - xs[b][i]);
      worst = std::min(worst, dot);
    }
  return worst;
}

double EffectiveModel::flux_at_zero() const {
  std::vector<double> zero(static_cast<std::size_t>(r_), 0.0), F(static_cast<std::size_t>(r_));
  flux(zero.data(), F.data());
  double s = 0.0;
  for (double v : F) s += v * v;
  return std::sqrt(s);
}

nlohmann::json EffectiveModel::to_json() const {
  if (kind_ == Kind::Closed)
    return {{"kind", "closed"}, {"components", r_}, {"tensor", T_}, {"beta", beta_}, {"p", p_}};
  return {{"kind", "table"}, {"components", r_}, {"axes", axes_}, {"m", m_}, {"M", M_}};
}

EffectiveModel EffectiveModel::from_json(const nlohmann::json& doc, const std::string& path) {
  const std::string kind = ju::string(ju::at(doc, path, "kind"), ju::child(path, "kind"));
  if (kind == "closed") {
    ju::require_keys(doc, path, {"kind", "components", "tensor", "beta", "p"});
    const int r = static_cast<int>(ju::integer(ju::at(doc, path, "components"), ju::child(path, "components")));
    return closed(r, ju::numbers(ju::at(doc, path, "tensor"), ju::child(path, "tensor")),
                  ju::get_or<double>(doc, path, "beta", 0.0), ju::get_or<double>(doc, path, "p", 2.0));
  }
  if (kind == "table") {
    ju::require_keys(doc, path, {"kind", "components", "axes", "m", "M"});
    const auto& ax = ju::at(doc, path, "axes");
    if (!ax.is_array()) throw ParseError("expected an array", ju::child(path, "axes"));
    std::vector<std::vector<double>> axes;
    for (std::size_t i = 0; i < ax.size(); ++i) axes.push_back(ju::numbers(ax[i], ju::child(ju::child(path, "axes"), i)));
    const int r = static_cast<int>(ju::integer(ju::at(doc, path, "components"), ju::child(path, "components")));
    if (r != static_cast<int>(axes.size())) throw ParseError("components differ from the axis count", path);
    return table(std::move(axes), ju::numbers(ju::at(doc, path, "m"), ju::child(path, "m")),
                 ju::numbers(ju::at(doc, path, "M"), ju::child(path, "M")));
  }
  throw ParseError("unknown effective model kind '" + kind + "'", ju::child(path, "kind"));
}

std::vector<std::vector<double>> default_axes(int components, std::span<const int> active) {
  std::vector<std::vector<double>> axes(static_cast<std::size_t>(components), std::vector<double>{0.0});
  std::vector<double> full;
  for (int k = 0; k < 9; ++k) full.push_back(-2.0 + 0.5 * k);
  if (active.empty()) {
    for (auto& ax : axes) ax = full;
  } else {
    for (int i : active) axes.at(static_cast<std::size_t>(i)) = full;
  }
  return axes;
}

EffectiveModel effective_coefficients(const MonotoneCellOperator& op, const std::vector<std::vector<double>>& axes,
                                      const CellOptions& opts, int threads) {
  op.validate();
  const std::size_t r = static_cast<std::size_t>(op.components());
  if (axes.size() != r) throw UsageError("table needs one axis per gradient component");
  std::size_t n = 1;
  for (const auto& ax : axes) n *= ax.size();
  std::vector<double> mv(n * r), Mv(n * r);
  parallel_for(n, threads, [&](std::size_t k) {
    std::vector<double> xi(r);
    std::size_t rem = k;
    for (std::size_t i = r; i-- > 0;) {
      xi[i] = axes[i][rem % axes[i].size()];
      rem /= axes[i].size();
    }
    const auto sol = solve_impl(op, xi, opts);
    for (std::size_t i = 0; i < r; ++i) {
      mv[k * r + i] = sol.m_xi[i];
      Mv[k * r + i] = sol.M_xi[i];
    }
  });
  return EffectiveModel::table(axes, std::move(mv), std::move(Mv));
}

EffectiveModel closed_effective_model(const MonotoneCellOperator& op, const CellOptions& opts) {
  op.validate();
  const int r = op.components();
  if (op.constant_coefficients()) {
    const std::vector<double> y(static_cast<std::size_t>(op.dimension), 0.0);
    const double tau = tau_grid(op, 1).front();
    return EffectiveModel::closed(r, op.tensor(y, tau), op.power_coefficient(y, tau), op.b ? op.p : 2.0);
  }
  if (op.b) throw UsageError("operator with an oscillating power part has no closed effective model");
  std::vector<double> T(static_cast<std::size_t>(r * r));
  for (int j = 0; j < r; ++j) {
    std::vector<double> e(static_cast<std::size_t>(r), 0.0);
    e[static_cast<std::size_t>(j)] = 1.0;
    const auto sol = solve_impl(op, e, opts);
    for (int i = 0; i < r; ++i) T[static_cast<std::size_t>(i * r + j)] = sol.flux[static_cast<std::size_t>(i)];
  }
  return EffectiveModel::closed(r, std::move(T), 0.0, 2.0);
}

HomogenizedMaterial::HomogenizedMaterial(const EffectiveModel& model, std::vector<double> weights)
    : model_(model), weights_(std::move(weights)) {}

double HomogenizedMaterial::energy(std::size_t e, const double* G) const {
  return (weights_.empty() ? 1.0 : weights_[e]) * model_.energy(G);
}

void HomogenizedMaterial::flux(std::size_t e, const double* G, double* F) const {
  model_.flux(G, F);
  if (!weights_.empty())
    for (int i = 0; i < model_.components(); ++i) F[i] *= weights_[e];
}

void HomogenizedMaterial::jacobian(std::size_t e, const double* G, double* J, double delta) const {
  const int r = model_.components();
  if (model_.kind() == EffectiveModel::Kind::Closed && model_.beta() != 0.0) {
    // Regularize the power part as for the fine-scale material.
    discrete::PowerLawMaterial reg(r, model_.tensor(), {model_.beta()}, model_.p());
    reg.jacobian(0, G, J, delta);
  } else {
    model_.jacobian(G, J);
  }
  if (!weights_.empty())
    for (int k = 0; k < r * r; ++k) J[k] *= weights_[e];
}

// ---------------------------------------------------------------------------

double ConvexDensity::operator()(std::span<const double> x, std::span<const double> y,
                                 std::span<const double> lambda) const {
  double s = 0.0;
  for (double l : lambda) s += l * l;
  double v = 0.0;
  if (a) v += 0.5 * (*a)(y) * s;
  if (b) v += (*b)(y) / p * std::pow(s, 0.5 * p);
  return weight(x) * v;
}

const fields::CellGeometry& ConvexDensity::geometry() const {
  if (a) return a->geometry();
  if (b) return b->geometry();
  throw InvalidOperator("density has neither a quadratic nor a power part");
}

void ConvexDensity::validate(int probes) const {
  const auto& g = geometry();
  if (g.dimension() != dimension) throw GeometryMismatch("density geometry dimension differs from the density");
  if (a && b && !(a->geometry() == b->geometry())) throw GeometryMismatch("density coefficients on different cells");
  if (b && !(p >= 2.0)) throw UnsupportedOperation("power densities need p >= 2");
  for (const auto& y : probe_grid(g, probes)) {
    const double av = a ? (*a)(y) : 0.0;
    const double bv = b ? (*b)(y) : 0.0;
    if (av < 0 || bv < 0 || !(av + bv > 0)) throw InvalidOperator("density is not strictly convex at a probe point");
  }
}

MonotoneCellOperator ConvexDensity::cell_operator() const {
  MonotoneCellOperator op;
  op.mode = Mode::Scalar;
  op.dimension = dimension;
  if (a) op.a = std::vector<OscillatoryField>{*a};
  op.b = b;
  op.p = b ? p : 3.0;
  return op;
}

DensityValue homogenized_density(const ConvexDensity& f, std::span<const double> x, std::span<const double> xi,
                                 const CellOptions& opts) {
  f.validate();
  if (static_cast<int>(xi.size()) != f.dimension) throw UsageError("xi dimension differs from the density");
  const double w = f.weight(x);
  if (!(w > 0)) throw InvalidOperator("density weight must be positive");
  const auto& g = f.geometry();
  DensityValue out;
  if (g.kind() == fields::CellKind::PeriodicTorus) {
    const auto sol = solve_impl(f.cell_operator(), xi, opts);
    out.value = w * sol.energy;
    for (double v : sol.flux) out.flux.push_back(w * v);
    out.corrector = sol.slices.front().corrector;
    out.error = sol.residual;
    return out;
  }
  if (f.dimension == 1 && !f.b && f.a) {
    // In one dimension the optimal corrector has constant flux, so the
    // quadratic cell problem reduces to the harmonic mean.
    const auto est = fields::mean_of_composition(*f.a, [](double v) { return 1.0 / v; });
    const double harmonic = 1.0 / est.value;
    out.value = w * 0.5 * harmonic * xi[0] * xi[0];
    out.flux = {w * harmonic * xi[0]};
    out.error = w * 0.5 * xi[0] * xi[0] * harmonic * harmonic * est.error;
    return out;
  }
  throw UnsupportedOperation("homogenized density on a " + fields::to_string(g.kind()) +
                             " cell needs a 1D quadratic density");
}

double density_energy(const ConvexDensity& f, std::span<const double> x, std::span<const double> xi,
                      const std::vector<double>& corrector, int grid) {
  const auto periods = periods_of(f.geometry());
  const auto mesh = discrete::periodic_scalar_mesh(f.dimension, grid, periods);
  if (corrector.size() != mesh->states()) throw UsageError("corrector does not match the cell grid");
  Vector z(static_cast<Eigen::Index>(mesh->dofs()));
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = corrector[static_cast<std::size_t>(k + 1)] - corrector[0];
  const Vector G = mesh->gradients(z, std::vector<double>(xi.begin(), xi.end()));
  const double vol = cell_volume(periods);
  double total = 0.0;
  for (std::size_t e = 0; e < mesh->elements; ++e)
    total += mesh->weights[e] *
             f(x, mesh->points[e], std::span<const double>(G.data() + e * mesh->r, static_cast<std::size_t>(mesh->r)));
  return total / vol;
}

// ---------------------------------------------------------------------------

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) os.put(static_cast<char>((v >> (8 * k)) & 0xff));
}

std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) {
    const int c = is.get();
    if (c == EOF) throw ParseError("truncated grid sidecar", "");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * k);
  }
  return v;
}

const char kMagic[8] = {'H', 'O', 'M', 'O', 'G', 'G', 'R', 'D'};

}  // namespace

void write_grid_sidecar(const std::filesystem::path& file, const std::vector<std::uint64_t>& dims,
                        const std::vector<double>& values) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  if (n != values.size()) throw UsageError("grid dimensions do not match the data");
  std::ofstream os(file, std::ios::binary);
  if (!os) throw Error("cannot write " + file.string());
  os.write(kMagic, 8);
  put_u64(os, dims.size());
  for (auto d : dims) put_u64(os, d);
  for (double v : values) put_u64(os, std::bit_cast<std::uint64_t>(v));
}

std::vector<double> read_grid_sidecar(const std::filesystem::path& file, std::vector<std::uint64_t>& dims) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw Error("cannot read " + file.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kMagic)) throw ParseError("not a grid sidecar", file.string());
  const std::uint64_t rank = get_u64(is);
  if (rank > 8) throw ParseError("grid sidecar rank too large", file.string());
  dims.clear();
  std::uint64_t n = 1;
  for (std::uint64_t k = 0; k < rank; ++k) {
    dims.push_back(get_u64(is));
    n *= dims.back();
  }
  std::vector<double> values(n);
  for (auto& v : values) v = std::bit_cast<double>(get_u64(is));
  return values;
}

nlohmann::json cell_solution_to_json(const CellSolution& sol, const std::filesystem::path& sidecar,
                                     const std::filesystem::path& base_dir) {
  nlohmann::json slices = nlohmann::json::array();
  std::vector<double> data;
  for (const auto& s : sol.slices) {
    slices.push_back({{"tau", s.tau}, {"residual", s.residual}, {"iterations", s.iterations}, {"m_xi", s.m_xi},
                      {"M_xi", s.M_xi}});
    data.insert(data.end(), s.corrector.begin(), s.corrector.end());
  }
  const std::uint64_t per = sol.slices.empty() ? 0 : sol.slices.front().corrector.size();
  const std::vector<std::uint64_t> dims{sol.slices.size(), per};
  write_grid_sidecar(base_dir / sidecar, dims, data);
  return {{"mode", sol.mode == Mode::Scalar ? "scalar" : "vector"},
          {"dimension", sol.dimension},
          {"grid", sol.grid},
          {"periods", sol.periods},
          {"xi", sol.xi},
          {"m_xi", sol.m_xi},
          {"M_xi", sol.M_xi},
          {"flux", sol.flux},
          {"energy", sol.energy},
          {"residual", sol.residual},
          {"iterations", sol.iterations},
          {"max_divergence", sol.max_divergence},
          {"slices", slices},
          {"corrector", {{"path", sidecar.generic_string()}, {"dims", dims}}}};
}

}  // namespace homog::correctors
