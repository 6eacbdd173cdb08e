#include "homog/multiscale_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "homog/error.hpp"
#include "homog/parallel.hpp"

namespace homog::solvers {

using discrete::Mesh;
using discrete::Vector;

double Domain::h() const {
  double h = 0.0;
  for (std::size_t d = 0; d < lo.size(); ++d) h = std::max(h, (hi[d] - lo[d]) / cells[d]);
  return h;
}

void Domain::validate() const {
  if (lo.empty() || lo.size() > 2 || hi.size() != lo.size() || cells.size() != lo.size())
    throw UsageError("domain needs matching 1D or 2D bounds and cell counts");
  for (std::size_t d = 0; d < lo.size(); ++d) {
    if (!(hi[d] > lo[d])) throw UsageError("domain bounds must satisfy lo < hi");
    if (cells[d] < 2) throw UsageError("domain needs at least two cells per axis");
  }
}

bool NoiseSpec::zero() const {
  for (const auto& m : modes)
    if (m.alpha || m.beta) return false;
  return true;
}

NoiseSpec NoiseSpec::averaged() const {
  NoiseSpec out;
  auto mean = [](const fields::OscillatoryField& f) {
    const double v = fields::mean_of_composition(f, [](double x) { return x; }).value;
    return fields::OscillatoryField::constant(v, fields::CellGeometry::periodic(f.geometry().dimension()));
  };
  for (const auto& m : modes) {
    Mode a;
    if (m.alpha) a.alpha = mean(*m.alpha);
    if (m.beta) a.beta = mean(*m.beta);
    a.profile = m.profile;
    out.modes.push_back(std::move(a));
  }
  return out;
}

double NoiseSpec::lipschitz(const Domain& domain) const {
  double total = 0.0;
  for (const auto& m : modes) {
    if (!m.beta) continue;
    double prof = 0.0;
    const int n = 64;
    for (int i = 0; i <= n; ++i) {
      std::vector<double> x(domain.lo.size());
      for (std::size_t d = 0; d < x.size(); ++d) x[d] = domain.lo[d] + (domain.hi[d] - domain.lo[d]) * i / n;
      prof = std::max(prof, std::abs(m.profile(x)));
    }
    total += fields::probe_sup(*m.beta) * prof;
  }
  return total;
}

std::string to_string(EvolutionMode mode) { return mode == EvolutionMode::Scalar ? "scalar" : "vector"; }

int EvolutionConfig::steps() const {
  if (!(T > 0)) throw UsageError("time horizon must be positive");
  const double max_dt = dt > 0 ? dt : time_scale() / 4;
  if (!(max_dt > 0)) throw UsageError("time step must be positive");
  return static_cast<int>(std::ceil(T / max_dt - 1e-9));
}

double l2_norm(const Mesh& mesh, const Vector& state) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < state.size(); ++i) s += mesh.mass[static_cast<std::size_t>(i)] * state[i] * state[i];
  return std::sqrt(s);
}

void recompute_norms(SolutionField& field) {
  const Mesh& m = *field.mesh;
  field.l2.clear();
  field.h1.clear();
  field.vnorm.clear();
  for (std::size_t n = 0; n < field.states.size(); ++n) {
    field.l2.push_back(l2_norm(m, field.states[n]));
    const Vector G = m.gradients(field.dofs[n]);
    double h1 = 0.0, vp = 0.0;
    for (std::size_t e = 0; e < m.elements; ++e) {
      double g2 = 0.0;
      for (int i = 0; i < m.r; ++i) g2 += G[static_cast<Eigen::Index>(e * m.r + i)] * G[static_cast<Eigen::Index>(e * m.r + i)];
      h1 += m.weights[e] * g2;
      vp += m.weights[e] * std::pow(g2, 0.5 * field.p);
    }
    field.h1.push_back(std::sqrt(h1));
    field.vnorm.push_back(std::pow(vp, 1.0 / field.p));
  }
}

double l2_qt_distance(const SolutionField& a, const SolutionField& b) {
  if (a.states.size() != b.states.size() || a.mesh->states() != b.mesh->states())
    throw UsageError("trajectories live on different grids");
  double total = 0.0;
  for (std::size_t n = 1; n < a.states.size(); ++n) {
    const double d = l2_norm(*a.mesh, a.states[n] - b.states[n]);
    total += (a.times[n] - a.times[n - 1]) * d * d;
  }
  return std::sqrt(total);
}

double final_l2_distance(const SolutionField& a, const SolutionField& b) {
  if (a.mesh->states() != b.mesh->states()) throw UsageError("trajectories live on different grids");
  return l2_norm(*a.mesh, a.final_state() - b.final_state());
}

namespace {

void check_config(const EvolutionConfig& cfg) {
  cfg.domain.validate();
  const int d = cfg.domain.dimension();
  if (cfg.mode == EvolutionMode::Vector) {
    if (d != 2) throw UsageError("vector mode needs a two-dimensional domain");
    if (cfg.domain.cells[0] != cfg.domain.cells[1]) throw UsageError("vector mode needs equal cell counts per axis");
    if (cfg.op.mode != correctors::Mode::Vector) throw UsageError("vector mode needs a vector-mode operator");
    if (!cfg.forcing.empty() && cfg.forcing.size() != 2) throw UsageError("vector forcing needs two components");
  } else {
    if (cfg.op.mode != correctors::Mode::Scalar) throw UsageError("scalar mode needs a scalar-mode operator");
    if (!cfg.forcing.empty() && cfg.forcing.size() != 1) throw UsageError("scalar forcing needs one component");
  }
  if (cfg.op.dimension != d) throw UsageError("operator dimension differs from the domain");
  if (!(cfg.eps > 0) || !(cfg.time_scale() > 0)) throw UsageError("eps must be positive");
}

std::shared_ptr<const Mesh> build_mesh(const EvolutionConfig& cfg) {
  const auto& D = cfg.domain;
  if (cfg.mode == EvolutionMode::Scalar) return discrete::dirichlet_scalar_mesh(D.lo, D.hi, D.cells);
  return discrete::periodic_stream_mesh(D.cells[0], {D.hi[0] - D.lo[0], D.hi[1] - D.lo[1]}, true);
}

// Coefficient points in physical coordinates.
std::vector<std::vector<double>> element_points(const EvolutionConfig& cfg, const Mesh& mesh) {
  auto pts = mesh.points;
  if (cfg.mode == EvolutionMode::Vector)
    for (auto& p : pts)
      for (std::size_t d = 0; d < p.size(); ++d) p[d] += cfg.domain.lo[d];
  return pts;
}

double eval_macro(const MacroFunction& f, std::span<const double> x, double t) {
  if (f.dimension() == static_cast<int>(x.size())) return f(x);
  if (f.dimension() == static_cast<int>(x.size()) + 1) {
    std::vector<double> X(x.begin(), x.end());
    X.push_back(t);
    return f(X);
  }
  throw UsageError("macroscopic function has dimension " + std::to_string(f.dimension()) +
                   ", expected the space dimension (plus time)");
}

double eval_field(const fields::OscillatoryField& f, std::span<const double> y, double tau) {
  return f.time_factor() ? f(y, tau) : f(y);
}

std::unique_ptr<discrete::PowerLawMaterial> eps_material(const EvolutionConfig& cfg,
                                                         const std::vector<std::vector<double>>& pts, double t) {
  const int r = cfg.op.components();
  std::vector<double> A, b;
  A.reserve(pts.size() * static_cast<std::size_t>(r * r));
  b.reserve(pts.size());
  const double tau = t / cfg.time_scale();
  std::vector<double> y;
  for (const auto& x : pts) {
    y.resize(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) y[d] = x[d] / cfg.eps;
    const auto T = cfg.op.tensor(y, tau);
    A.insert(A.end(), T.begin(), T.end());
    b.push_back(cfg.op.power_coefficient(y, tau));
  }
  return std::make_unique<discrete::PowerLawMaterial>(r, std::move(A), std::move(b), cfg.op.b ? cfg.op.p : 2.0);
}

Vector initial_dofs(const EvolutionConfig& cfg, const Mesh& mesh) {
  const auto& D = cfg.domain;
  if (cfg.mode == EvolutionMode::Scalar) {
    const auto pts = state_points(cfg, mesh);
    Vector s(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) s[static_cast<Eigen::Index>(i)] = cfg.initial(pts[i]);
    return mesh.C.transpose() * s;
  }
  const int n = D.cells[0];
  const double h0 = (D.hi[0] - D.lo[0]) / n, h1 = (D.hi[1] - D.lo[1]) / n;
  auto psi = [&](int i, int j) {
    const std::vector<double> x{D.lo[0] + i * h0, D.lo[1] + j * h1};
    return cfg.initial(x);
  };
  Vector z = Vector::Zero(static_cast<Eigen::Index>(mesh.dofs()));
  const double base = psi(0, 0);
  for (int k = 1; k < n * n; ++k) z[k - 1] = psi(k / n, k % n) - base;
  return z;
}

struct NoiseEval {
  const NoiseSpec* spec = nullptr;
  double eps = 1.0, eps_time = 1.0;
};

// The shared time-stepping loop. `material(t)` returns the material at time t
// (called once when `time_dependent` is false).
SolutionField evolve(const EvolutionConfig& cfg, const std::shared_ptr<const Mesh>& mesh,
                     const std::function<std::unique_ptr<discrete::Material>(double)>& material, bool time_dependent,
                     const NoiseEval& noise, const wiener::WienerPath* path, double p) {
  const int N = cfg.steps();
  const double dt = cfg.T / N;
  const bool noisy = noise.spec && !noise.spec->zero();
  if (noisy) {
    if (!path) throw UsageError("noise needs a Wiener path");
    if (path->steps() != N || std::abs(path->dt() - dt) > 1e-12 * dt)
      throw UsageError("Wiener path grid (" + std::to_string(path->steps()) + " steps) does not match the " +
                       std::to_string(N) + "-step time grid");
    if (path->dimension() != noise.spec->dimension())
      throw UsageError("Wiener dimension differs from the noise dimension");
  }
  const auto pts = state_points(cfg, *mesh);
  discrete::StaggeredGrid grid;
  if (cfg.mode == EvolutionMode::Vector) {
    const int n = cfg.domain.cells[0];
    grid = {n, (cfg.domain.hi[0] - cfg.domain.lo[0]) / n, (cfg.domain.hi[1] - cfg.domain.lo[1]) / n};
  }
  const std::size_t half = mesh->states() / 2;

  SolutionField out;
  out.mode = cfg.mode;
  out.mesh = mesh;
  out.p = p;
  Vector z = initial_dofs(cfg, *mesh);
  out.times.push_back(0.0);
  out.dofs.push_back(z);
  out.states.push_back(mesh->C * z);
  if (cfg.mode == EvolutionMode::Vector) out.max_divergence = grid.max_divergence(out.states.back());

  discrete::Minimizer solver(mesh, 1.0 / dt);
  std::unique_ptr<discrete::Material> mat;
  if (!time_dependent) mat = material(0.0);
  for (int n = 0; n < N; ++n) {
    const double t0 = n * dt, t1 = (n + 1) * dt;
    const Vector& s = out.states.back();
    Vector target = s;
    if (!cfg.forcing.empty()) {
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& f = cfg.mode == EvolutionMode::Scalar || i < half ? cfg.forcing[0] : cfg.forcing[1];
        target[static_cast<Eigen::Index>(i)] += dt * eval_macro(f, pts[i], t1);
      }
    }
    if (noisy) {
      const auto dw = path->increment(n);
      const double tau = t0 / noise.eps_time;
      std::vector<double> y;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        y.resize(pts[i].size());
        for (std::size_t d = 0; d < y.size(); ++d) y[d] = pts[i][d] / noise.eps;
        double g = 0.0;
        for (int k = 0; k < noise.spec->dimension(); ++k) {
          const auto& mode = noise.spec->modes[static_cast<std::size_t>(k)];
          double gk = 0.0;
          if (mode.alpha) gk += eval_field(*mode.alpha, y, tau);
          if (mode.beta) gk += eval_field(*mode.beta, y, tau) * s[static_cast<Eigen::Index>(i)];
          g += gk * mode.profile(pts[i]) * dw[static_cast<std::size_t>(k)];
        }
        target[static_cast<Eigen::Index>(i)] += g;
      }
    }
    if (cfg.mode == EvolutionMode::Vector && cfg.convection) target -= dt * grid.convection(s);
    if (time_dependent) mat = material(t1);
    const bool reuse = !time_dependent && n > 0;
    const auto res = solver.solve(*mat, {}, target, Vector(), z, cfg.newton, reuse);
    z = res.z;
    out.residual = std::max(out.residual, res.residual);
    out.newton_iterations += res.iterations;
    out.times.push_back(t1);
    out.dofs.push_back(z);
    out.states.push_back(mesh->C * z);
    if (cfg.mode == EvolutionMode::Vector)
      out.max_divergence = std::max(out.max_divergence, grid.max_divergence(out.states.back()));
    const double norm = l2_norm(*mesh, out.states.back());
    if (!std::isfinite(norm) || norm > cfg.blowup_cap) {
      out.aborted = true;
      out.abort_reason = "L2 norm " + std::to_string(norm) + " exceeded the cap at t = " + std::to_string(t1);
      break;
    }
  }
  recompute_norms(out);
  return out;
}

SolutionField run_eps(const EvolutionConfig& cfg, const wiener::WienerPath* path) {
  check_config(cfg);
  cfg.op.validate();
  const int N = cfg.steps();
  if (cfg.check_resolution) {
    if (cfg.domain.h() > cfg.eps / 8 * (1 + 1e-12))
      throw UsageError("mesh width " + std::to_string(cfg.domain.h()) + " does not resolve eps/8 = " +
                       std::to_string(cfg.eps / 8));
    if (cfg.T / N > cfg.time_scale() / 4 * (1 + 1e-12))
      throw UsageError("time step does not resolve eps_time/4");
  }
  auto mesh = build_mesh(cfg);
  const auto pts = element_points(cfg, *mesh);
  const bool time_dependent = cfg.op.time_period().has_value();
  auto material = [&](double t) -> std::unique_ptr<discrete::Material> { return eps_material(cfg, pts, t); };
  return evolve(cfg, mesh, material, time_dependent, {&cfg.noise, cfg.eps, cfg.time_scale()}, path,
                cfg.op.b ? cfg.op.p : 2.0);
}

SolutionField run_homogenized(const EffectiveModel& model, const EvolutionConfig& cfg, const NoiseSpec& noise,
                              const wiener::WienerPath* path) {
  check_config(cfg);
  if (model.components() != cfg.op.components()) throw UsageError("effective model does not match the operator");
  auto mesh = build_mesh(cfg);
  auto material = [&](double) -> std::unique_ptr<discrete::Material> {
    return std::make_unique<correctors::HomogenizedMaterial>(model, std::vector<double>{});
  };
  const double p = model.kind() == EffectiveModel::Kind::Closed && model.beta() != 0.0 ? model.p()
                   : cfg.op.b                                                        ? cfg.op.p
                                                                                     : 2.0;
  return evolve(cfg, mesh, material, false, {&noise, cfg.eps, cfg.time_scale()}, path, p);
}

}  // namespace

std::vector<std::vector<double>> state_points(const EvolutionConfig& cfg, const Mesh& mesh) {
  const auto& D = cfg.domain;
  std::vector<std::vector<double>> pts;
  pts.reserve(mesh.states());
  if (cfg.mode == EvolutionMode::Scalar) {
    if (D.dimension() == 1) {
      const double h = (D.hi[0] - D.lo[0]) / D.cells[0];
      for (int i = 0; i <= D.cells[0]; ++i) pts.push_back({D.lo[0] + i * h});
    } else {
      const double h0 = (D.hi[0] - D.lo[0]) / D.cells[0], h1 = (D.hi[1] - D.lo[1]) / D.cells[1];
      for (int i = 0; i <= D.cells[0]; ++i)
        for (int j = 0; j <= D.cells[1]; ++j) pts.push_back({D.lo[0] + i * h0, D.lo[1] + j * h1});
    }
  } else {
    const int n = D.cells[0];
    const double h0 = (D.hi[0] - D.lo[0]) / n, h1 = (D.hi[1] - D.lo[1]) / n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) pts.push_back({D.lo[0] + i * h0, D.lo[1] + (j + 0.5) * h1});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) pts.push_back({D.lo[0] + (i + 0.5) * h0, D.lo[1] + j * h1});
  }
  if (pts.size() != mesh.states()) throw Error("state layout does not match the mesh");
  return pts;
}

// --- minimization ------------------------------------------------------------

namespace {

SolutionField minimize(const std::shared_ptr<const Mesh>& mesh, const discrete::Material& mat, const Domain& domain,
                       const MinimizeProblem& problem, double p) {
  EvolutionConfig layout;
  layout.domain = domain;
  const auto pts = state_points(layout, *mesh);
  Vector ml(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i)
    ml[static_cast<Eigen::Index>(i)] = mesh->mass[i] * eval_macro(problem.load, pts[i], 0.0);
  const Vector load = mesh->C.transpose() * ml;
  discrete::Minimizer solver(mesh);
  const auto res = solver.solve(mat, {}, Vector(), load, Vector(), problem.newton);
  SolutionField out;
  out.mesh = mesh;
  out.p = p;
  out.times = {0.0};
  out.dofs = {res.z};
  out.states = {mesh->C * res.z};
  out.energy = res.energy;
  out.residual = res.residual;
  out.newton_iterations = res.iterations;
  recompute_norms(out);
  return out;
}

}  // namespace

SolutionField minimize_functional_eps(const correctors::ConvexDensity& f, double eps, const MinimizeProblem& problem) {
  problem.domain.validate();
  f.validate();
  if (!(eps > 0)) throw UsageError("eps must be positive");
  if (f.dimension != problem.domain.dimension()) throw UsageError("density dimension differs from the domain");
  if (problem.check_resolution && problem.domain.h() > eps / 8 * (1 + 1e-12))
    throw UsageError("mesh width does not resolve eps/8");
  const auto& D = problem.domain;
  auto mesh = discrete::dirichlet_scalar_mesh(D.lo, D.hi, D.cells);
  const int r = mesh->r;
  std::vector<double> A, b;
  std::vector<double> y;
  for (const auto& x : mesh->points) {
    y.resize(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) y[d] = x[d] / eps;
    const double w = f.weight(x);
    const double av = f.a ? w * (*f.a)(y) : 0.0;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) A.push_back(i == j ? av : 0.0);
    b.push_back(f.b ? w * (*f.b)(y) : 0.0);
  }
  discrete::PowerLawMaterial mat(r, std::move(A), std::move(b), f.b ? f.p : 2.0);
  return minimize(mesh, mat, D, problem, f.b ? f.p : 2.0);
}

SolutionField minimize_homogenized_functional(const EffectiveModel& model, const MacroFunction& weight,
                                              const MinimizeProblem& problem) {
  problem.domain.validate();
  const auto& D = problem.domain;
  if (model.components() != D.dimension()) throw UsageError("effective model does not match the domain dimension");
  auto mesh = discrete::dirichlet_scalar_mesh(D.lo, D.hi, D.cells);
  std::vector<double> w;
  for (const auto& x : mesh->points) w.push_back(weight(x));
  correctors::HomogenizedMaterial mat(model, std::move(w));
  const double p = model.kind() == EffectiveModel::Kind::Closed && model.beta() != 0.0 ? model.p() : 2.0;
  return minimize(mesh, mat, D, problem, p);
}

EffectiveModel density_model(const correctors::ConvexDensity& f, const correctors::CellOptions& opts) {
  f.validate();
  const auto& g = f.geometry();
  if (!f.b) {
    if (g.kind() == fields::CellKind::PeriodicTorus) return correctors::closed_effective_model(f.cell_operator(), opts);
    if (f.dimension == 1) {
      const auto est = fields::mean_of_composition(*f.a, [](double v) { return 1.0 / v; });
      return EffectiveModel::closed(1, {1.0 / est.value}, 0.0, 2.0);
    }
    throw UnsupportedOperation("quadratic densities on " + fields::to_string(g.kind()) + " cells need dimension 1");
  }
  const auto op = f.cell_operator();
  return correctors::effective_coefficients(op, correctors::default_axes(op.components()), opts);
}

// --- evolution ---------------------------------------------------------------

SolutionField solve_parabolic_eps(const EvolutionConfig& cfg) {
  if (!cfg.noise.zero()) throw UsageError("parabolic solver needs g = 0; use the SPDE solver");
  return run_eps(cfg, nullptr);
}

SolutionField solve_parabolic_homogenized(const EffectiveModel& model, const EvolutionConfig& cfg) {
  if (!cfg.noise.zero()) throw UsageError("parabolic solver needs g = 0; use the SPDE solver");
  return run_homogenized(model, cfg, cfg.noise, nullptr);
}

SolutionField solve_spde_eps(const EvolutionConfig& cfg, const wiener::WienerPath& path) { return run_eps(cfg, &path); }

SolutionField solve_spde_homogenized(const EffectiveModel& model, const EvolutionConfig& cfg,
                                     const wiener::WienerPath& path) {
  return run_homogenized(model, cfg, cfg.noise.averaged(), &path);
}

EffectiveModel evolution_model(const EvolutionConfig& cfg, const correctors::CellOptions& opts, int threads,
                               const std::vector<std::vector<double>>& axes) {
  cfg.op.validate();
  if (!cfg.op.b || cfg.op.constant_coefficients()) return correctors::closed_effective_model(cfg.op, opts);
  return correctors::effective_coefficients(cfg.op, axes.empty() ? correctors::default_axes(cfg.op.components()) : axes,
                                            opts, threads);
}

// --- statistics --------------------------------------------------------------

namespace {

struct RunStats {
  double sup_l2sq = 0.0, int_h1sq = 0.0, int_vp = 0.0;
};

RunStats run_stats(const SolutionField& f) {
  RunStats s;
  for (std::size_t n = 0; n < f.l2.size(); ++n) {
    s.sup_l2sq = std::max(s.sup_l2sq, f.l2[n] * f.l2[n]);
    if (n > 0) {
      const double dt = f.times[n] - f.times[n - 1];
      s.int_h1sq += dt * f.h1[n] * f.h1[n];
      s.int_vp += dt * std::pow(f.vnorm[n], f.p);
    }
  }
  return s;
}

void mean_se(const std::vector<double>& v, double& mean, double& se) {
  mean = 0.0;
  se = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x / static_cast<double>(v.size());
  if (v.size() < 2) return;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean) / static_cast<double>(v.size() - 1);
  se = std::sqrt(var / static_cast<double>(v.size()));
}

AprioriStats aggregate(const std::vector<RunStats>& runs) {
  AprioriStats out;
  out.samples = runs.size();
  std::vector<double> a, b, c;
  for (const auto& r : runs) {
    a.push_back(r.sup_l2sq);
    b.push_back(r.int_h1sq);
    c.push_back(r.int_vp);
  }
  mean_se(a, out.sup_l2sq, out.sup_l2sq_se);
  mean_se(b, out.int_h1sq, out.int_h1sq_se);
  mean_se(c, out.int_vp, out.int_vp_se);
  return out;
}

}  // namespace

AprioriStats estimate_apriori_bounds(std::span<const SolutionField> ensemble) {
  std::vector<RunStats> runs;
  for (const auto& f : ensemble) runs.push_back(run_stats(f));
  return aggregate(runs);
}

TrendReport apriori_trend(std::span<const AprioriStats> levels, double tolerance) {
  TrendReport out;
  if (levels.empty()) return out;
  double lo = levels.front().sup_l2sq, hi = lo;
  for (const auto& l : levels) {
    lo = std::min(lo, l.sup_l2sq);
    hi = std::max(hi, l.sup_l2sq);
  }
  out.spread = hi > 0 ? (hi - lo) / hi : 0.0;
  out.flat = out.spread <= tolerance;
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw UsageError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto k = static_cast<std::size_t>(std::floor(pos));
  if (k + 1 >= values.size()) return values.back();
  return values[k] + (pos - static_cast<double>(k)) * (values[k + 1] - values[k]);
}

StudyReport convergence_study(const StudyConfig& cfg) {
  if (cfg.eps_list.empty()) throw UsageError("study needs at least one eps");
  for (std::size_t k = 1; k < cfg.eps_list.size(); ++k)
    if (!(cfg.eps_list[k] < cfg.eps_list[k - 1])) throw UsageError("eps list must decrease strictly");
  if (cfg.trials < 1) throw UsageError("study needs at least one trial");
  if (!cfg.stochastic && !cfg.base.noise.zero()) throw UsageError("deterministic study needs g = 0");

  const double ratio = cfg.base.eps_time ? *cfg.base.eps_time / cfg.base.eps : 1.0;
  auto level_cfg = [&](double eps) {
    EvolutionConfig c = cfg.base;
    c.eps = eps;
    c.eps_time = eps * ratio;
    return c;
  };
  EvolutionConfig finest = level_cfg(cfg.eps_list.back());
  const double dt = cfg.base.dt > 0 ? cfg.base.dt : finest.time_scale() / 4;

  StudyReport report;
  const EffectiveModel model = cfg.model ? *cfg.model : evolution_model(cfg.base, cfg.cell, cfg.threads);
  report.model = model.to_json();
  const int trials = cfg.stochastic ? cfg.trials : 1;
  EvolutionConfig hom_cfg = level_cfg(cfg.eps_list.front());
  hom_cfg.dt = dt;
  report.dt = cfg.base.T / hom_cfg.steps();
  const int steps = hom_cfg.steps();
  const int m = std::max(1, cfg.base.noise.dimension());
  auto path_for = [&](int trial) {
    return cfg.stochastic ? wiener::WienerPath(cfg.seed + static_cast<std::uint64_t>(trial), m, steps, report.dt)
                          : wiener::WienerPath::zero(m, steps, report.dt);
  };

  std::vector<SolutionField> hom(static_cast<std::size_t>(trials));
  parallel_for(hom.size(), cfg.threads, [&](std::size_t k) {
    const auto path = path_for(static_cast<int>(k));
    hom[k] = solve_spde_homogenized(model, hom_cfg, path);
  });
  std::vector<RunStats> hom_stats;
  for (const auto& h : hom) hom_stats.push_back(run_stats(h));
  report.homogenized = aggregate(hom_stats);

  const std::size_t L = cfg.eps_list.size();
  report.rows.resize(L * static_cast<std::size_t>(trials));
  parallel_for(report.rows.size(), cfg.threads, [&](std::size_t idx) {
    const std::size_t level = idx / static_cast<std::size_t>(trials);
    const int trial = static_cast<int>(idx % static_cast<std::size_t>(trials));
    EvolutionConfig c = level_cfg(cfg.eps_list[level]);
    c.dt = dt;
    const auto path = path_for(trial);
    const auto u = solve_spde_eps(c, path);
    if (u.aborted) throw NonConvergence("trajectory aborted: " + u.abort_reason, u.l2.empty() ? 0.0 : u.l2.back(), static_cast<int>(u.times.size()) - 1);
    const auto s = run_stats(u);
    StudyRow& row = report.rows[idx];
    row.eps = cfg.eps_list[level];
    row.trial = trial;
    row.error = l2_qt_distance(u, hom[static_cast<std::size_t>(trial)]);
    row.sup_l2sq = s.sup_l2sq;
    row.int_h1sq = s.int_h1sq;
    row.int_vp = s.int_vp;
    row.max_divergence = u.max_divergence;
  });

  for (std::size_t level = 0; level < L; ++level) {
    StudyLevel lv;
    lv.eps = cfg.eps_list[level];
    std::vector<double> errors;
    std::vector<RunStats> runs;
    for (int t = 0; t < trials; ++t) {
      const auto& row = report.rows[level * static_cast<std::size_t>(trials) + static_cast<std::size_t>(t)];
      errors.push_back(row.error);
      runs.push_back({row.sup_l2sq, row.int_h1sq, row.int_vp});
      lv.mean += row.error / trials;
    }
    lv.median = quantile(errors, 0.5);
    lv.upper_quartile = quantile(errors, 0.75);
    lv.stats = aggregate(runs);
    report.levels.push_back(lv);
  }
  report.monotone = true;
  for (std::size_t k = 1; k < L; ++k)
    if (!(report.levels[k].median < report.levels[k - 1].median)) report.monotone = false;
  if (L >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int count = 0;
    for (const auto& lv : report.levels) {
      if (!(lv.median > 0)) continue;
      const double x = std::log(lv.eps), y = std::log(lv.median);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++count;
    }
    if (count >= 2) report.rate = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  }
  return report;
}

}  // namespace homog::solvers
