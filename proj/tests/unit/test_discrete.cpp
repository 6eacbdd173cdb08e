#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "homog/discrete.hpp"
#include "homog/error.hpp"

using namespace homog;
using namespace homog::discrete;

namespace {

const double kPi = std::numbers::pi;

Vector random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("1D Dirichlet Poisson is nodally exact") {
  const int n = 32;
  auto mesh = dirichlet_scalar_mesh({0.0}, {1.0}, {n});
  Minimizer solver(mesh);
  PowerLawMaterial mat(1, {1.0}, {0.0}, 2.0);
  Vector ones = Vector::Ones(static_cast<Eigen::Index>(mesh->states()));
  Vector load = mesh->C.transpose() * Vector(ones.cwiseProduct(Eigen::Map<const Vector>(mesh->mass.data(), ones.size())));
  const auto res = solver.solve(mat, {}, Vector(), load, Vector());
  const Vector u = mesh->C * res.z;
  for (int k = 0; k <= n; ++k) {
    const double x = static_cast<double>(k) / n;
    CHECK(u[k] == doctest::Approx(0.5 * x * (1 - x)).epsilon(1e-12));
  }
  CHECK(res.residual <= 1e-10);
  // Discrete minimum energy of the quadratic problem is -1/2 l.u.
  CHECK(res.energy == doctest::Approx(-0.5 * load.dot(res.z)).epsilon(1e-12));
}

TEST_CASE("periodic 1D cell flux equals the discrete harmonic mean") {
  const int n = 64;
  auto mesh = periodic_scalar_mesh(1, n, {1.0});
  std::vector<double> A;
  double inv = 0.0;
  for (const auto& pt : mesh->points) {
    A.push_back(2 + std::sin(2 * kPi * pt[0]));
    inv += 1.0 / A.back() / n;
  }
  PowerLawMaterial mat(1, A, {0.0}, 2.0);
  Minimizer solver(mesh);
  const auto res = solver.solve(mat, {1.0}, Vector(), Vector(), Vector());
  const Vector G = mesh->gradients(res.z, {1.0});
  double flux = 0.0;
  for (std::size_t e = 0; e < mesh->elements; ++e) flux += mesh->weights[e] * A[e] * G[static_cast<Eigen::Index>(e)];
  CHECK(flux == doctest::Approx(1.0 / inv).epsilon(1e-12));
  CHECK(1.0 / inv == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("p-power Newton converges from zero") {
  auto mesh = periodic_scalar_mesh(2, 16, {1.0, 1.0});
  std::vector<double> b;
  for (const auto& pt : mesh->points) b.push_back(pt[0] < 0.5 ? 1.0 : 8.0);
  PowerLawMaterial mat(2, {}, b, 3.0);
  Minimizer solver(mesh);
  const auto res = solver.solve(mat, {1.0, 0.0}, Vector(), Vector(), Vector());
  CHECK(res.residual <= 1e-10);
  CHECK(res.iterations > 1);
  // Flux-constant closed form for a laminate along y0.
  const double c = std::pow(0.5 + 0.5 / std::sqrt(8.0), -2.0);
  CHECK(2 * res.energy * 3 / 2 == doctest::Approx(c).epsilon(1e-8));
}

TEST_CASE("material flux is the energy gradient") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  PowerLawMaterial mat(4, {2, 0.3, 0, 0, 0.3, 1.5, 0, 0.1, 0, 0, 1, 0, 0, 0.1, 0, 2}, {0.7}, 3.5);
  for (int trial = 0; trial < 20; ++trial) {
    double G[4], F[4], J[16];
    for (double& g : G) g = u(rng);
    mat.flux(0, G, F);
    mat.jacobian(0, G, J, 0.0);
    for (int i = 0; i < 4; ++i) {
      const double h = 1e-6;
      double Gp[4], Gm[4], Fp[4], Fm[4];
      std::copy(G, G + 4, Gp);
      std::copy(G, G + 4, Gm);
      Gp[i] += h;
      Gm[i] -= h;
      CHECK((mat.energy(0, Gp) - mat.energy(0, Gm)) / (2 * h) == doctest::Approx(F[i]).epsilon(1e-7));
      mat.flux(0, Gp, Fp);
      mat.flux(0, Gm, Fm);
      for (int k = 0; k < 4; ++k) CHECK((Fp[k] - Fm[k]) / (2 * h) == doctest::Approx(J[i * 4 + k]).epsilon(1e-6));
    }
  }
}

TEST_CASE("stream-function states are discretely divergence free") {
  const int n = 12;
  auto mesh = periodic_stream_mesh(n, {1.0, 1.0}, true);
  const Vector z = random_vector(mesh->dofs(), 5);
  const Vector s = mesh->C * z;
  StaggeredGrid grid{n, 1.0 / n, 1.0 / n};
  CHECK(grid.max_divergence(s) < 1e-9);
  // Centre derivatives satisfy d0u0 + d1u1 = 0 on every sub-element.
  const Vector G = mesh->gradients(z);
  for (std::size_t e = 0; e < mesh->elements; ++e) CHECK(std::abs(G[4 * e] + G[4 * e + 3]) < 1e-8);
}

TEST_CASE("convection does no work on divergence-free states") {
  const int n = 16;
  auto mesh = periodic_stream_mesh(n, {1.0, 1.0}, true);
  StaggeredGrid grid{n, 1.0 / n, 1.0 / n};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Vector s = mesh->C * random_vector(mesh->dofs(), seed);
    const Vector b = grid.convection(s);
    CHECK(std::abs(s.dot(b)) <= 1e-10 * s.squaredNorm() * b.norm());
  }
  // Uniform flow is steady.
  Vector uniform = Vector::Zero(2 * n * n);
  uniform.head(n * n).setConstant(0.3);
  uniform.tail(n * n).setConstant(-0.2);
  CHECK(grid.convection(uniform).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("implicit step with mass term projects onto divergence-free fields") {
  const int n = 8;
  auto mesh = periodic_stream_mesh(n, {1.0, 1.0}, true);
  Minimizer solver(mesh, 100.0);
  PowerLawMaterial mat(4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}, {0.0}, 2.0);
  const Vector target = random_vector(mesh->states(), 9);
  const auto res = solver.solve(mat, {}, target, Vector(), Vector());
  StaggeredGrid grid{n, 1.0 / n, 1.0 / n};
  CHECK(grid.max_divergence(mesh->C * res.z) < 1e-9);
  CHECK(res.residual < 1e-10);
}

TEST_CASE("invalid inputs") {
  CHECK_THROWS_AS(periodic_scalar_mesh(3, 8, {}), UnsupportedOperation);
  CHECK_THROWS_AS(dirichlet_scalar_mesh({0.0}, {1.0}, {1}), UsageError);
  CHECK_THROWS_AS(PowerLawMaterial(1, {1.0}, {1.0}, 1.5), UsageError);
}
