#include "homog/discrete.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/SparseLU>

#include "homog/error.hpp"

namespace homog::discrete {

PowerLawMaterial::PowerLawMaterial(int r, std::vector<double> A, std::vector<double> b, double p)
    : r_(r), A_(std::move(A)), b_(std::move(b)), p_(p) {
  if (r < 1) throw UsageError("material needs at least one component");
  if (A_.empty()) A_.assign(static_cast<std::size_t>(r) * r, 0.0);
  if (b_.empty()) b_.assign(1, 0.0);
  if (A_.size() % (static_cast<std::size_t>(r) * r) != 0) throw UsageError("material tensor size mismatch");
  shared_a_ = A_.size() == static_cast<std::size_t>(r) * r;
  shared_b_ = b_.size() == 1;
  has_power_ = std::any_of(b_.begin(), b_.end(), [](double v) { return v != 0.0; });
  if (has_power_ && !(p_ >= 2.0)) throw UsageError("power-law exponent must be at least 2");
}

double PowerLawMaterial::energy(std::size_t e, const double* G) const {
  const double* a = A(e);
  double quad = 0.0, s = 0.0;
  for (int i = 0; i < r_; ++i) {
    double row = 0.0;
    for (int j = 0; j < r_; ++j) row += a[i * r_ + j] * G[j];
    quad += G[i] * row;
    s += G[i] * G[i];
  }
  double value = 0.5 * quad;
  if (has_power_) value += b(e) / p_ * std::pow(s, 0.5 * p_);
  return value;
}

void PowerLawMaterial::split_flux(std::size_t e, const double* G, double* linear, double* power) const {
  const double* a = A(e);
  double s = 0.0;
  for (int i = 0; i < r_; ++i) s += G[i] * G[i];
  const double scale = has_power_ && s > 0 ? b(e) * std::pow(s, 0.5 * (p_ - 2)) : 0.0;
  for (int i = 0; i < r_; ++i) {
    double row = 0.0;
    for (int j = 0; j < r_; ++j) row += a[i * r_ + j] * G[j];
    linear[i] = row;
    power[i] = scale * G[i];
  }
}

void PowerLawMaterial::flux(std::size_t e, const double* G, double* F) const {
  double power[16];
  split_flux(e, G, F, power);
  for (int i = 0; i < r_; ++i) F[i] += power[i];
}

void PowerLawMaterial::jacobian(std::size_t e, const double* G, double* J, double delta) const {
  const double* a = A(e);
  for (int i = 0; i < r_; ++i)
    for (int j = 0; j < r_; ++j) J[j * r_ + i] = a[i * r_ + j];
  if (!has_power_) return;
  double s = delta * delta;
  for (int i = 0; i < r_; ++i) s += G[i] * G[i];
  const double bb = b(e);
  const double c0 = bb * std::pow(s, 0.5 * (p_ - 2));
  const double c1 = bb * (p_ - 2) * std::pow(s, 0.5 * (p_ - 4));
  for (int i = 0; i < r_; ++i) {
    J[i * r_ + i] += c0;
    for (int j = 0; j < r_; ++j) J[j * r_ + i] += c1 * G[i] * G[j];
  }
}

Vector Mesh::gradients(const Vector& z, const std::vector<double>& xi) const {
  Vector G = B * z;
  if (!xi.empty()) {
    if (static_cast<int>(xi.size()) != r) throw UsageError("gradient offset has wrong size");
    for (std::size_t e = 0; e < elements; ++e)
      for (int i = 0; i < r; ++i) G[static_cast<Eigen::Index>(e * r + i)] += xi[static_cast<std::size_t>(i)];
  }
  return G;
}

Minimizer::Minimizer(std::shared_ptr<const Mesh> mesh, double inv_dt) : mesh_(std::move(mesh)), inv_dt_(inv_dt) {
  const Mesh& m = *mesh_;
  const auto rows = static_cast<Eigen::Index>(m.elements * m.r);
  Eigen::VectorXd w(rows);
  for (std::size_t e = 0; e < m.elements; ++e)
    for (int i = 0; i < m.r; ++i) w[static_cast<Eigen::Index>(e * m.r + i)] = m.weights[e];
  Sparse gram = Sparse(m.B.transpose()) * w.asDiagonal() * m.B;
  if (inv_dt_ > 0) {
    Eigen::VectorXd mass = Eigen::Map<const Eigen::VectorXd>(m.mass.data(), static_cast<Eigen::Index>(m.mass.size()));
    mass_part_ = inv_dt_ * (Sparse(m.C.transpose()) * mass.asDiagonal() * m.C);
    gram += mass_part_;
  } else {
    mass_part_.resize(static_cast<Eigen::Index>(m.dofs()), static_cast<Eigen::Index>(m.dofs()));
  }
  gram_.compute(gram);
  if (gram_.info() != Eigen::Success) throw UsageError("mesh Gram matrix is singular");
}

double Minimizer::dual_norm(const Vector& r) const {
  const Vector y = gram_.solve(r);
  return std::sqrt(std::max(0.0, r.dot(y)));
}

double Minimizer::objective(const Material& material, const std::vector<double>& xi, const Vector& target,
                            const Vector& load, const Vector& z) const {
  const Mesh& m = *mesh_;
  const Vector G = m.gradients(z, xi);
  double total = 0.0;
  for (std::size_t e = 0; e < m.elements; ++e) total += m.weights[e] * material.energy(e, G.data() + e * m.r);
  if (inv_dt_ > 0) {
    const Vector d = m.C * z - target;
    for (Eigen::Index i = 0; i < d.size(); ++i) total += 0.5 * inv_dt_ * m.mass[static_cast<std::size_t>(i)] * d[i] * d[i];
  }
  if (load.size()) total -= load.dot(z);
  return total;
}

Vector Minimizer::gradient(const Material& material, const std::vector<double>& xi, const Vector& target,
                           const Vector& load, const Vector& z) const {
  const Mesh& m = *mesh_;
  const Vector G = m.gradients(z, xi);
  Vector F(G.size());
  for (std::size_t e = 0; e < m.elements; ++e) {
    material.flux(e, G.data() + e * m.r, F.data() + e * m.r);
    for (int i = 0; i < m.r; ++i) F[static_cast<Eigen::Index>(e * m.r + i)] *= m.weights[e];
  }
  Vector g = m.B.transpose() * F;
  if (inv_dt_ > 0) {
    Vector d = m.C * z - target;
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] *= m.mass[static_cast<std::size_t>(i)];
    g += inv_dt_ * (m.C.transpose() * d);
  }
  if (load.size()) g -= load;
  return g;
}

Sparse Minimizer::hessian(const Material& material, const Vector& G, double delta) const {
  const Mesh& m = *mesh_;
  const int r = m.r;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(m.elements * r * r);
  std::vector<double> J(static_cast<std::size_t>(r) * r);
  for (std::size_t e = 0; e < m.elements; ++e) {
    material.jacobian(e, G.data() + e * r, J.data(), delta);
    const auto base = static_cast<int>(e * r);
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i) {
        const double v = J[static_cast<std::size_t>(j * r + i)];
        if (v != 0.0) trip.emplace_back(base + i, base + j, m.weights[e] * v);
      }
  }
  Sparse K(G.size(), G.size());
  K.setFromTriplets(trip.begin(), trip.end());
  Sparse H = Sparse(m.B.transpose()) * K * m.B;
  if (inv_dt_ > 0) H += mass_part_;
  return H;
}

NewtonResult Minimizer::solve(const Material& material, const std::vector<double>& xi, const Vector& target,
                              const Vector& load, Vector z0, const NewtonOptions& opts, bool reuse_hessian) {
  const Mesh& m = *mesh_;
  if (material.components() != m.r) throw UsageError("material and mesh disagree on gradient components");
  if (z0.size() != static_cast<Eigen::Index>(m.dofs())) z0 = Vector::Zero(static_cast<Eigen::Index>(m.dofs()));
  NewtonResult out;
  out.z = std::move(z0);
  const bool energy_merit = material.has_energy();
  Vector g = gradient(material, xi, target, load, out.z);
  double res = dual_norm(g);
  for (int it = 0;; ++it) {
    out.iterations = it;
    out.residual = res;
    if (res <= opts.tolerance) break;
    if (it >= opts.max_iterations) throw NonConvergence("Newton iteration limit reached", res, it);

    Vector dz;
    const Vector G = m.gradients(out.z, xi);
    if (energy_merit) {
      if (!(reuse_hessian && material.quadratic() && cached_)) {
        auto fac = std::make_unique<Eigen::SimplicialLDLT<Sparse>>(hessian(material, G, opts.delta));
        if (fac->info() != Eigen::Success) throw NonConvergence("singular Newton system", res, it);
        cached_ = std::move(fac);
      }
      dz = -cached_->solve(g);
      if (!material.quadratic()) cached_.reset();
    } else {
      Eigen::SparseLU<Sparse> lu;
      Sparse H = hessian(material, G, opts.delta);
      H.makeCompressed();
      lu.compute(H);
      if (lu.info() != Eigen::Success) throw NonConvergence("singular Newton system", res, it);
      dz = -lu.solve(g);
    }

    const double e0 = energy_merit ? objective(material, xi, target, load, out.z) : 0.0;
    const double slope = g.dot(dz);
    double t = 1.0;
    Vector trial, g_trial;
    double res_trial = 0.0;
    bool accepted = false;
    while (t >= opts.step_floor) {
      trial = out.z + t * dz;
      bool ok = false;
      if (energy_merit && slope < 0) {
        const double e1 = objective(material, xi, target, load, trial);
        ok = e1 <= e0 + opts.armijo * t * slope;
      }
      g_trial = gradient(material, xi, target, load, trial);
      res_trial = dual_norm(g_trial);
      // Near the minimum the energy decrease drowns in round-off; the
      // residual decides there.
      if (!ok) ok = res_trial <= (1.0 - opts.armijo * t) * res;
      if (ok) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) throw NonConvergence("Newton stagnation: line search failed", res, it);
    out.z = std::move(trial);
    g = std::move(g_trial);
    res = res_trial;
  }
  if (!energy_merit) {
    out.energy = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const Vector G = m.gradients(out.z, xi);
  double energy = 0.0;
  for (std::size_t e = 0; e < m.elements; ++e) energy += m.weights[e] * material.energy(e, G.data() + e * m.r);
  if (load.size()) energy -= load.dot(out.z);
  out.energy = energy;
  return out;
}

namespace {

struct Builder {
  std::vector<Eigen::Triplet<double>> b, c;
  std::vector<int> dof;  // node -> dof or -1

  void grad(int row, int node, double coef) {
    if (dof[static_cast<std::size_t>(node)] >= 0) b.emplace_back(row, dof[static_cast<std::size_t>(node)], coef);
  }
};

int wrapi(int i, int n) { return ((i % n) + n) % n; }

void finish(Mesh& m, Builder& bld, std::size_t dofs) {
  m.B.resize(static_cast<Eigen::Index>(m.elements * m.r), static_cast<Eigen::Index>(dofs));
  m.B.setFromTriplets(bld.b.begin(), bld.b.end());
  m.C.resize(static_cast<Eigen::Index>(m.mass.size()), static_cast<Eigen::Index>(dofs));
  m.C.setFromTriplets(bld.c.begin(), bld.c.end());
}

}  // namespace

std::shared_ptr<Mesh> periodic_scalar_mesh(int dimension, int n, std::vector<double> periods) {
  if (dimension < 1 || dimension > 2) throw UnsupportedOperation("periodic scalar mesh supports N = 1, 2");
  if (n < 2) throw UsageError("periodic mesh needs at least two cells per axis");
  if (periods.empty()) periods.assign(static_cast<std::size_t>(dimension), 1.0);
  auto mesh = std::make_shared<Mesh>();
  Mesh& m = *mesh;
  m.r = dimension;
  m.space_dimension = dimension;
  const int nodes = dimension == 1 ? n : n * n;
  Builder bld;
  bld.dof.resize(static_cast<std::size_t>(nodes));
  bld.dof[0] = -1;
  for (int k = 1; k < nodes; ++k) bld.dof[static_cast<std::size_t>(k)] = k - 1;
  for (int k = 1; k < nodes; ++k) bld.c.emplace_back(k, k - 1, 1.0);
  if (dimension == 1) {
    const double h = periods[0] / n;
    m.elements = static_cast<std::size_t>(n);
    m.mass.assign(static_cast<std::size_t>(n), h);
    for (int i = 0; i < n; ++i) {
      bld.grad(i, wrapi(i + 1, n), 1.0 / h);
      bld.grad(i, i, -1.0 / h);
      m.weights.push_back(h);
      m.points.push_back({(i + 0.5) * h});
    }
  } else {
    const double h0 = periods[0] / n, h1 = periods[1] / n;
    auto node = [n](int i, int j) { return wrapi(i, n) * n + wrapi(j, n); };
    m.elements = static_cast<std::size_t>(2 * n * n);
    m.mass.assign(static_cast<std::size_t>(nodes), h0 * h1);
    int e = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        // lower triangle (i,j), (i+1,j), (i+1,j+1)
        bld.grad(2 * e, node(i + 1, j), 1.0 / h0);
        bld.grad(2 * e, node(i, j), -1.0 / h0);
        bld.grad(2 * e + 1, node(i + 1, j + 1), 1.0 / h1);
        bld.grad(2 * e + 1, node(i + 1, j), -1.0 / h1);
        m.weights.push_back(0.5 * h0 * h1);
        m.points.push_back({(i + 2.0 / 3) * h0, (j + 1.0 / 3) * h1});
        ++e;
        // upper triangle (i,j), (i+1,j+1), (i,j+1)
        bld.grad(2 * e, node(i + 1, j + 1), 1.0 / h0);
        bld.grad(2 * e, node(i, j + 1), -1.0 / h0);
        bld.grad(2 * e + 1, node(i, j + 1), 1.0 / h1);
        bld.grad(2 * e + 1, node(i, j), -1.0 / h1);
        m.weights.push_back(0.5 * h0 * h1);
        m.points.push_back({(i + 1.0 / 3) * h0, (j + 2.0 / 3) * h1});
        ++e;
      }
  }
  finish(m, bld, static_cast<std::size_t>(nodes - 1));
  return mesh;
}

std::shared_ptr<Mesh> dirichlet_scalar_mesh(std::vector<double> lo, std::vector<double> hi, std::vector<int> cells) {
  const int dim = static_cast<int>(lo.size());
  if (dim < 1 || dim > 2 || hi.size() != lo.size() || cells.size() != lo.size())
    throw UsageError("Dirichlet mesh needs matching 1D or 2D bounds and cell counts");
  for (int c : cells)
    if (c < 2) throw UsageError("Dirichlet mesh needs at least two cells per axis");
  auto mesh = std::make_shared<Mesh>();
  Mesh& m = *mesh;
  m.r = dim;
  m.space_dimension = dim;
  Builder bld;
  if (dim == 1) {
    const int n = cells[0];
    const double h = (hi[0] - lo[0]) / n;
    bld.dof.assign(static_cast<std::size_t>(n + 1), -1);
    for (int k = 1; k < n; ++k) bld.dof[static_cast<std::size_t>(k)] = k - 1;
    for (int k = 1; k < n; ++k) bld.c.emplace_back(k, k - 1, 1.0);
    m.mass.assign(static_cast<std::size_t>(n + 1), h);
    m.mass.front() = m.mass.back() = 0.5 * h;
    m.elements = static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i) {
      bld.grad(i, i + 1, 1.0 / h);
      bld.grad(i, i, -1.0 / h);
      m.weights.push_back(h);
      m.points.push_back({lo[0] + (i + 0.5) * h});
    }
    finish(m, bld, static_cast<std::size_t>(n - 1));
    return mesh;
  }
  const int n0 = cells[0], n1 = cells[1];
  const double h0 = (hi[0] - lo[0]) / n0, h1 = (hi[1] - lo[1]) / n1;
  auto node = [n1](int i, int j) { return i * (n1 + 1) + j; };
  const int nodes = (n0 + 1) * (n1 + 1);
  bld.dof.assign(static_cast<std::size_t>(nodes), -1);
  int next = 0;
  m.mass.assign(static_cast<std::size_t>(nodes), 0.0);
  for (int i = 0; i <= n0; ++i)
    for (int j = 0; j <= n1; ++j) {
      if (i > 0 && i < n0 && j > 0 && j < n1) {
        bld.dof[static_cast<std::size_t>(node(i, j))] = next;
        bld.c.emplace_back(node(i, j), next, 1.0);
        ++next;
      }
    }
  m.elements = static_cast<std::size_t>(2 * n0 * n1);
  int e = 0;
  const double area = 0.5 * h0 * h1;
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n1; ++j) {
      bld.grad(2 * e, node(i + 1, j), 1.0 / h0);
      bld.grad(2 * e, node(i, j), -1.0 / h0);
      bld.grad(2 * e + 1, node(i + 1, j + 1), 1.0 / h1);
      bld.grad(2 * e + 1, node(i + 1, j), -1.0 / h1);
      m.weights.push_back(area);
      m.points.push_back({lo[0] + (i + 2.0 / 3) * h0, lo[1] + (j + 1.0 / 3) * h1});
      for (int v : {node(i, j), node(i + 1, j), node(i + 1, j + 1)}) m.mass[static_cast<std::size_t>(v)] += area / 3;
      ++e;
      bld.grad(2 * e, node(i + 1, j + 1), 1.0 / h0);
      bld.grad(2 * e, node(i, j + 1), -1.0 / h0);
      bld.grad(2 * e + 1, node(i, j + 1), 1.0 / h1);
      bld.grad(2 * e + 1, node(i, j), -1.0 / h1);
      m.weights.push_back(area);
      m.points.push_back({lo[0] + (i + 1.0 / 3) * h0, lo[1] + (j + 2.0 / 3) * h1});
      for (int v : {node(i, j), node(i + 1, j + 1), node(i, j + 1)}) m.mass[static_cast<std::size_t>(v)] += area / 3;
      ++e;
    }
  finish(m, bld, static_cast<std::size_t>(next));
  return mesh;
}

std::shared_ptr<Mesh> periodic_stream_mesh(int n, std::vector<double> periods, bool mean_flow) {
  if (n < 4) throw UsageError("stream-function mesh needs at least four cells per axis");
  if (periods.empty()) periods = {1.0, 1.0};
  if (periods.size() != 2) throw UsageError("stream-function mesh is two-dimensional");
  auto mesh = std::make_shared<Mesh>();
  Mesh& m = *mesh;
  m.r = 4;
  m.space_dimension = 2;
  const double h0 = periods[0] / n, h1 = periods[1] / n;
  const int nodes = n * n;
  auto node = [n](int i, int j) { return wrapi(i, n) * n + wrapi(j, n); };
  Builder bld;
  bld.dof.resize(static_cast<std::size_t>(nodes));
  bld.dof[0] = -1;
  for (int k = 1; k < nodes; ++k) bld.dof[static_cast<std::size_t>(k)] = k - 1;
  const int psi_dofs = nodes - 1;
  const std::size_t dofs = static_cast<std::size_t>(psi_dofs + (mean_flow ? 2 : 0));

  auto state = [&](int row, int nd, double coef) {
    if (bld.dof[static_cast<std::size_t>(nd)] >= 0) bld.c.emplace_back(row, bld.dof[static_cast<std::size_t>(nd)], coef);
  };
  m.mass.assign(static_cast<std::size_t>(2 * nodes), h0 * h1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int f0 = i * n + j, f1 = nodes + i * n + j;
      state(f0, node(i, j + 1), 1.0 / h1);
      state(f0, node(i, j), -1.0 / h1);
      state(f1, node(i + 1, j), -1.0 / h0);
      state(f1, node(i, j), 1.0 / h0);
      if (mean_flow) {
        bld.c.emplace_back(f0, psi_dofs, 1.0);
        bld.c.emplace_back(f1, psi_dofs + 1, 1.0);
      }
    }

  m.elements = static_cast<std::size_t>(4 * nodes);
  int e = 0;
  const double hh = h0 * h1;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const std::pair<int, int> corners[4] = {{i, j}, {i + 1, j}, {i, j + 1}, {i + 1, j + 1}};
      for (const auto& [a, b] : corners) {
        const int row = 4 * e;
        // d0 u0 at the centre
        bld.grad(row, node(i + 1, j + 1), 1.0 / hh);
        bld.grad(row, node(i + 1, j), -1.0 / hh);
        bld.grad(row, node(i, j + 1), -1.0 / hh);
        bld.grad(row, node(i, j), 1.0 / hh);
        // d1 u0 at the corner
        bld.grad(row + 1, node(a, b + 1), 1.0 / (h1 * h1));
        bld.grad(row + 1, node(a, b), -2.0 / (h1 * h1));
        bld.grad(row + 1, node(a, b - 1), 1.0 / (h1 * h1));
        // d0 u1 at the corner
        bld.grad(row + 2, node(a + 1, b), -1.0 / (h0 * h0));
        bld.grad(row + 2, node(a, b), 2.0 / (h0 * h0));
        bld.grad(row + 2, node(a - 1, b), -1.0 / (h0 * h0));
        // d1 u1 at the centre
        bld.grad(row + 3, node(i + 1, j + 1), -1.0 / hh);
        bld.grad(row + 3, node(i + 1, j), 1.0 / hh);
        bld.grad(row + 3, node(i, j + 1), 1.0 / hh);
        bld.grad(row + 3, node(i, j), -1.0 / hh);
        m.weights.push_back(0.25 * hh);
        m.points.push_back({(i + 0.5) * h0, (j + 0.5) * h1});
        ++e;
      }
    }
  finish(m, bld, dofs);
  return mesh;
}

std::size_t StaggeredGrid::u0(int i, int j) const {
  return static_cast<std::size_t>(wrapi(i, n) * n + wrapi(j, n));
}

std::size_t StaggeredGrid::u1(int i, int j) const {
  return static_cast<std::size_t>(n * n + wrapi(i, n) * n + wrapi(j, n));
}

double StaggeredGrid::divergence(const Vector& s, int i, int j) const {
  auto at = [&](std::size_t k) { return s[static_cast<Eigen::Index>(k)]; };
  return (at(u0(i + 1, j)) - at(u0(i, j))) / h0 + (at(u1(i, j + 1)) - at(u1(i, j))) / h1;
}

double StaggeredGrid::max_divergence(const Vector& s) const {
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) worst = std::max(worst, std::abs(divergence(s, i, j)));
  return worst;
}

Vector StaggeredGrid::convection(const Vector& s) const {
  auto U = [&](int i, int j) { return s[static_cast<Eigen::Index>(u0(i, j))]; };
  auto V = [&](int i, int j) { return s[static_cast<Eigen::Index>(u1(i, j))]; };
  // u0 u1 product at node (i, j)
  auto uv = [&](int i, int j) { return 0.25 * (U(i, j - 1) + U(i, j)) * (V(i - 1, j) + V(i, j)); };
  Vector out(s.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      {
        const double cp = 0.5 * (U(i, j) + U(i + 1, j)), cm = 0.5 * (U(i - 1, j) + U(i, j));
        const double vp = 0.5 * (V(i - 1, j + 1) + V(i, j + 1)), vm = 0.5 * (V(i - 1, j) + V(i, j));
        const double adv = 0.5 * (cp * (U(i + 1, j) - U(i, j)) + cm * (U(i, j) - U(i - 1, j))) / h0 +
                           0.5 * (vp * (U(i, j + 1) - U(i, j)) + vm * (U(i, j) - U(i, j - 1))) / h1;
        const double c_plus = 0.5 * (U(i, j) + U(i + 1, j)), c_minus = 0.5 * (U(i - 1, j) + U(i, j));
        const double div = (c_plus * c_plus - c_minus * c_minus) / h0 + (uv(i, j + 1) - uv(i, j)) / h1;
        out[static_cast<Eigen::Index>(u0(i, j))] = 0.5 * (adv + div);
      }
      {
        const double up = 0.5 * (U(i + 1, j - 1) + U(i + 1, j)), um = 0.5 * (U(i, j - 1) + U(i, j));
        const double dp = 0.5 * (V(i, j) + V(i, j + 1)), dm = 0.5 * (V(i, j - 1) + V(i, j));
        const double adv = 0.5 * (up * (V(i + 1, j) - V(i, j)) + um * (V(i, j) - V(i - 1, j))) / h0 +
                           0.5 * (dp * (V(i, j + 1) - V(i, j)) + dm * (V(i, j) - V(i, j - 1))) / h1;
        const double d_plus = 0.5 * (V(i, j) + V(i, j + 1)), d_minus = 0.5 * (V(i, j - 1) + V(i, j));
        const double div = (uv(i + 1, j) - uv(i, j)) / h0 + (d_plus * d_plus - d_minus * d_minus) / h1;
        out[static_cast<Eigen::Index>(u1(i, j))] = 0.5 * (adv + div);
      }
    }
  return out;
}

}  // namespace homog::discrete
