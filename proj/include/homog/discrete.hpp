#pragma once

// Discrete energies on structured grids shared by the cell and macroscopic
// solvers. An energy is a sum over sub-elements e of w_e phi_e(G_e), where
// G_e = (B z + g)_e is an r-vector of discrete derivatives of the unknowns z,
// plus an optional mass term and a linear load:
//
//   J(z) = sum_e w_e phi_e(G_e) + 1/(2 dt) |C z - u*|_M^2 - l.z
//
// Minimization is damped Newton with Armijo backtracking on J (or on the
// dual-norm residual for materials without an energy).

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace homog::discrete {

using Vector = Eigen::VectorXd;
using Sparse = Eigen::SparseMatrix<double>;

class Material {
 public:
  virtual ~Material() = default;
  virtual int components() const = 0;
  virtual bool has_energy() const { return true; }
  /// True when phi_e is quadratic with element data fixed, so the Hessian
  /// does not depend on G.
  virtual bool quadratic() const { return false; }
  virtual double energy(std::size_t e, const double* G) const = 0;
  virtual void flux(std::size_t e, const double* G, double* F) const = 0;
  /// r x r Jacobian of the flux, column-major. `delta` regularizes the
  /// |G|^{p-2} singularity.
  virtual void jacobian(std::size_t e, const double* G, double* J, double delta) const = 0;
};

/// phi_e(G) = 1/2 G.A_e G + b_e/p |G|^p with A_e symmetric.
class PowerLawMaterial : public Material {
 public:
  /// Per-element data: A has elements*r*r entries (row-major per element),
  /// b has `elements` entries. Shared data: A has r*r entries, b one entry.
  PowerLawMaterial(int r, std::vector<double> A, std::vector<double> b, double p);

  int components() const override { return r_; }
  bool quadratic() const override { return !has_power_; }
  double energy(std::size_t e, const double* G) const override;
  void flux(std::size_t e, const double* G, double* F) const override;
  void jacobian(std::size_t e, const double* G, double* J, double delta) const override;

  double p() const { return p_; }
  const double* A(std::size_t e) const { return shared_a_ ? A_.data() : A_.data() + e * r_ * r_; }
  double b(std::size_t e) const { return shared_b_ ? b_[0] : b_[e]; }
  /// Split of the flux into the linear part A G and the power part.
  void split_flux(std::size_t e, const double* G, double* linear, double* power) const;

 private:
  int r_;
  std::vector<double> A_, b_;
  double p_;
  bool shared_a_, shared_b_, has_power_;
};

/// Linear structure of a discretization on free unknowns.
struct Mesh {
  int r = 1;
  std::size_t elements = 0;
  Sparse B;                     // (elements * r) x dofs
  std::vector<double> weights;  // per element
  Sparse C;                     // state x dofs (nodal values / face velocities)
  std::vector<double> mass;     // per state entry
  std::vector<std::vector<double>> points;  // coefficient point of each element
  int space_dimension = 1;

  std::size_t dofs() const { return static_cast<std::size_t>(B.cols()); }
  std::size_t states() const { return static_cast<std::size_t>(C.rows()); }
  /// G = B z + offset, where the offset repeats `xi` on every element.
  Vector gradients(const Vector& z, const std::vector<double>& xi = {}) const;
};

struct NewtonOptions {
  double tolerance = 1e-10;
  int max_iterations = 200;
  double delta = 1e-8;
  double armijo = 1e-4;
  double step_floor = 1e-10;
};

struct NewtonResult {
  Vector z;
  double residual = 0.0;  // dual norm of the unregularized gradient
  int iterations = 0;
  double energy = 0.0;    // sum_e w_e phi_e - l.z (no mass term); NaN without an energy
};

/// Minimizer bound to a mesh and a mass scale 1/dt (0 for static problems).
/// Caches the Gram factorization that defines the dual norm, and the Hessian
/// factorization for quadratic materials.
class Minimizer {
 public:
  Minimizer(std::shared_ptr<const Mesh> mesh, double inv_dt = 0.0);

  const Mesh& mesh() const { return *mesh_; }
  double inv_dt() const { return inv_dt_; }

  /// `xi` is the constant gradient offset (empty for none); `target` is u*
  /// in state space (ignored when inv_dt = 0); `load` is l in dof space.
  /// Setting `reuse_hessian` keeps the factorization of a quadratic material
  /// across calls; the caller asserts the element data are unchanged.
  NewtonResult solve(const Material& material, const std::vector<double>& xi, const Vector& target, const Vector& load,
                     Vector z0, const NewtonOptions& opts = {}, bool reuse_hessian = false);

  /// Unregularized gradient of J at z.
  Vector gradient(const Material& material, const std::vector<double>& xi, const Vector& target, const Vector& load,
                  const Vector& z) const;
  double objective(const Material& material, const std::vector<double>& xi, const Vector& target, const Vector& load,
                   const Vector& z) const;
  double dual_norm(const Vector& r) const;

 private:
  Sparse hessian(const Material& material, const Vector& G, double delta) const;

  std::shared_ptr<const Mesh> mesh_;
  double inv_dt_;
  Sparse mass_part_;
  Eigen::SimplicialLDLT<Sparse> gram_;
  std::unique_ptr<Eigen::SimplicialLDLT<Sparse>> cached_;
};

// Mesh builders. Node (i, j) of an n0 x n1 grid has index i * n1 + j.

/// Periodic cell [0, P)^N (N = 1, 2), nodal unknowns, P1 elements (intervals
/// or two triangles per square). Node 0 is pinned; states are all nodes.
std::shared_ptr<Mesh> periodic_scalar_mesh(int dimension, int n, std::vector<double> periods);

/// Periodic 2D cell [0, P0) x [0, P1) in stream-function form: unknowns are
/// nodal psi (node 0 pinned) plus, if `mean_flow`, two constant velocities.
/// States are the u0 faces followed by the u1 faces. Each square carries four
/// sub-elements (one per corner) with G = (d0u0, d1u0, d0u1, d1u1).
std::shared_ptr<Mesh> periodic_stream_mesh(int n, std::vector<double> periods, bool mean_flow);

/// Interval or rectangle with zero Dirichlet data, P1 elements, interior
/// nodes as unknowns. States are all nodes (lumped mass).
std::shared_ptr<Mesh> dirichlet_scalar_mesh(std::vector<double> lo, std::vector<double> hi, std::vector<int> cells);

/// Face velocities of the stream-function state: u0 at (i h0, (j+1/2) h1),
/// u1 at ((i+1/2) h0, j h1).
struct StaggeredGrid {
  int n = 0;
  double h0 = 0.0, h1 = 0.0;
  std::size_t u0(int i, int j) const;
  std::size_t u1(int i, int j) const;
  /// Discrete divergence at the centre of square (i, j).
  double divergence(const Vector& state, int i, int j) const;
  double max_divergence(const Vector& state) const;
  /// Explicit skew-symmetric convection 1/2[(u.grad)u + div(u (x) u)] on the faces.
  Vector convection(const Vector& state) const;
};

}  // namespace homog::discrete
