#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "homog/correctors.hpp"
#include "homog/error.hpp"

using namespace homog;
using namespace homog::correctors;
using fields::CellGeometry;
using fields::OscillatoryField;

namespace {

const double kPi = std::numbers::pi;

// 2 + sin(2 pi y_axis) on the unit cell of the given dimension.
OscillatoryField two_plus_sin(int dim, int axis = 0) {
  std::vector<int> k0(static_cast<std::size_t>(dim), 0), k1 = k0;
  k1[static_cast<std::size_t>(axis)] = 1;
  return OscillatoryField::trig(CellGeometry::periodic(dim), {{k0, 2.0, 0.0}, {k1, 1.0, -kPi / 2}});
}

OscillatoryField halves(double lo, double hi) {
  return {CellGeometry::periodic(1), fields::PiecewiseConstant{{{0.5}}, {lo, hi}}};
}

MonotoneCellOperator scalar_op(int dim, std::optional<OscillatoryField> a, std::optional<OscillatoryField> b,
                               double p = 3.0) {
  MonotoneCellOperator op;
  op.dimension = dim;
  if (a) op.a = std::vector<OscillatoryField>{*a};
  op.b = std::move(b);
  op.p = p;
  return op;
}

// Independent 1D oracle for p = 3: a s + b|s|s = c is a quadratic in s on
// each sign branch; bisection on c with a fine midpoint rule.
double oracle_flux_p3(const std::function<double(double)>& a, const std::function<double(double)>& b, double xi) {
  const int n = 4096;
  auto mean_s = [&](double c) {
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
      const double y = (k + 0.5) / n, av = a(y), bv = b(y), m = std::abs(c);
      total += std::copysign((-av + std::sqrt(av * av + 4 * bv * m)) / (2 * bv), c) / n;
    }
    return total;
  };
  double lo = -100, hi = 100;
  for (int it = 0; it < 200; ++it) {
    const double c = 0.5 * (lo + hi);
    (mean_s(c) > xi ? hi : lo) = c;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("constant coefficients have a zero corrector") {
  const auto op = scalar_op(2, OscillatoryField::constant(1.5, CellGeometry::periodic(2)),
                            OscillatoryField::constant(0.5, CellGeometry::periodic(2)));
  const std::vector<double> xi{0.7, -0.4};
  CellOptions opts;
  opts.grid = 16;
  const auto sol = solve_cell_problem(op, xi, opts);
  for (double v : sol.slices.front().corrector) CHECK(std::abs(v) < 1e-12);
  const double n = std::hypot(xi[0], xi[1]);
  for (int i = 0; i < 2; ++i) {
    CHECK(sol.m_xi[static_cast<std::size_t>(i)] == doctest::Approx(1.5 * xi[static_cast<std::size_t>(i)]));
    CHECK(sol.M_xi[static_cast<std::size_t>(i)] == doctest::Approx(0.5 * n * xi[static_cast<std::size_t>(i)]));
  }
  const auto model = closed_effective_model(op);
  CHECK(model.beta() == 0.5);
  CHECK(model.tensor() == std::vector<double>{1.5, 0, 0, 1.5});
}

TEST_CASE("1D linear cell gives the harmonic mean") {
  const auto op = scalar_op(1, two_plus_sin(1), std::nullopt);
  const double xi = 1.0;
  const auto grid = solve_cell_problem(op, std::span<const double>(&xi, 1));
  CHECK(std::abs(grid.flux[0] - std::sqrt(3.0)) < 1e-6);
  CHECK(grid.residual <= 1e-10);
  const auto closed = solve_cell_1d_closed_form(op, xi);
  CHECK(std::abs(closed.flux[0] - std::sqrt(3.0)) < 1e-9);
  CHECK(closed_effective_model(op).tensor()[0] == doctest::Approx(std::sqrt(3.0)).epsilon(1e-6));
}

TEST_CASE("1D power-law laminate") {
  const auto op = scalar_op(1, std::nullopt, halves(1.0, 8.0), 3.0);
  const double xi = 1.0;
  const double expected = std::pow(0.5 + 0.5 / std::sqrt(8.0), -2.0);
  CHECK(expected == doctest::Approx(2.18331).epsilon(1e-5));
  const auto grid = solve_cell_problem(op, std::span<const double>(&xi, 1));
  CHECK(std::abs(grid.flux[0] - expected) < 1e-5);
  CHECK(std::abs(solve_cell_1d_closed_form(op, xi).flux[0] - expected) < 1e-10);
}

TEST_CASE("1D mixed operator matches the flux-constant closed form") {
  const auto op = scalar_op(1, two_plus_sin(1), OscillatoryField::constant(1.0), 3.0);
  for (double xi : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    const auto grid = solve_cell_problem(op, std::span<const double>(&xi, 1));
    const auto closed = solve_cell_1d_closed_form(op, xi);
    CHECK(std::abs(grid.flux[0] - closed.flux[0]) < 1e-5);
    CHECK(std::abs(grid.m_xi[0] - closed.m_xi[0]) < 1e-5);
    const double oracle =
        oracle_flux_p3([](double y) { return 2 + std::sin(2 * kPi * y); }, [](double) { return 1.0; }, xi);
    CHECK(std::abs(closed.flux[0] - oracle) < 1e-6);
  }
}

TEST_CASE("2D laminate tensor and grid convergence") {
  const auto op = scalar_op(2, two_plus_sin(2, 0), std::nullopt);
  std::vector<double> err;
  for (int n : {32, 64, 128}) {
    CellOptions opts;
    opts.grid = n;
    const auto T = closed_effective_model(op, opts).tensor();
    CHECK(std::abs(T[1]) < 1e-10);
    CHECK(std::abs(T[2]) < 1e-10);
    CHECK(std::abs(T[3] - 2.0) < 1e-4);
    err.push_back(std::abs(T[0] - std::sqrt(3.0)));
    if (n == 128) CHECK(err.back() < 1e-4);
  }
  CHECK(err[2] < err[1]);
  CHECK(std::log2(err[1] / err[2]) >= 1.0);
}

TEST_CASE("perturbed initial guesses reach the same corrector") {
  const auto op = scalar_op(2, two_plus_sin(2, 1), OscillatoryField::constant(0.5, CellGeometry::periodic(2)));
  const std::vector<double> xi{1.0, 0.5};
  CellOptions opts;
  opts.grid = 24;
  const auto base = solve_cell_problem(op, xi, opts);
  opts.initial_perturbation = 0.3;
  opts.seed = 11;
  const auto other = solve_cell_problem(op, xi, opts);
  double diff = 0.0;
  for (std::size_t k = 0; k < base.slices[0].corrector.size(); ++k)
    diff = std::max(diff, std::abs(base.slices[0].corrector[k] - other.slices[0].corrector[k]));
  CHECK(diff < 10 * opts.tolerance);
  CHECK(std::abs(base.flux[1] - other.flux[1]) < 1e-12);
}

TEST_CASE("time-cell slices are averaged") {
  const auto h = OscillatoryField::trig(CellGeometry::periodic(1, {2.0}), {{{0}, 1.0, 0.0}, {{1}, 0.5, 0.0}});
  auto op = scalar_op(1, two_plus_sin(1).with_time_factor(h), std::nullopt);
  CHECK(op.time_period() == 2.0);
  const double xi = 1.0;
  const auto sol = solve_cell_problem(op, std::span<const double>(&xi, 1));
  REQUIRE(sol.slices.size() == 8);
  // Each slice has flux sqrt(3) h(tau); h averages to 1 on the midpoint grid.
  CHECK(std::abs(sol.flux[0] - std::sqrt(3.0)) < 1e-6);
  for (const auto& s : sol.slices)
    CHECK(s.m_xi[0] == doctest::Approx(std::sqrt(3.0) * (1 + 0.5 * std::cos(kPi * s.tau))).epsilon(1e-6));
}

TEST_CASE("vector-mode correctors are divergence free") {
  MonotoneCellOperator op;
  op.mode = Mode::Vector;
  op.dimension = 2;
  op.a = std::vector<OscillatoryField>{two_plus_sin(2, 0)};
  op.b = OscillatoryField::constant(1.0, CellGeometry::periodic(2));
  CellOptions opts;
  opts.grid = 16;
  const std::vector<double> xi{0.0, 1.0, 0.5, 0.0};
  const auto sol = solve_cell_problem(op, xi, opts);
  CHECK(sol.max_divergence <= 1e-8);
  CHECK(sol.residual <= 1e-10);
  CHECK(sol.flux.size() == 4);
  // Zero gradient gives zero flux.
  const auto zero = solve_cell_problem(op, std::vector<double>(4, 0.0), opts);
  for (double f : zero.flux) CHECK(f == 0.0);
}

TEST_CASE("effective table is monotone and vanishes at zero") {
  const auto op = scalar_op(1, two_plus_sin(1), OscillatoryField::constant(1.0), 3.0);
  CellOptions opts;
  opts.grid = 32;
  const auto model = effective_coefficients(op, default_axes(1), opts, 2);
  CHECK(model.points() == 9);
  CHECK(model.flux_at_zero() < 1e-14);
  CHECK(model.monotonicity_gap() > 0);
  for (double xi : {-2.0, -1.0, 1.0, 2.0}) {
    double F = 0;
    model.flux(&xi, &F);
    CHECK(std::abs(F - solve_cell_1d_closed_form(op, xi).flux[0]) < 1e-5);
  }
  double outside = 2.5, F = 0;
  CHECK_THROWS_AS(model.flux(&outside, &F), RangeError);
  // Jacobian is the slope of the interpolant.
  double x = 0.3, J = 0, Fa = 0, Fb = 0, xa = 0.0, xb = 0.5;
  model.jacobian(&x, &J);
  model.flux(&xa, &Fa);
  model.flux(&xb, &Fb);
  CHECK(J == doctest::Approx((Fb - Fa) / 0.5));
}

TEST_CASE("table with an inactive component") {
  const auto model = EffectiveModel::table({{-1.0, 1.0}, {0.0}}, {-2, 0, 2, 0}, {0, 0, 0, 0});
  double xi[2] = {0.5, 0.0}, F[2];
  model.flux(xi, F);
  CHECK(F[0] == doctest::Approx(1.0));
  xi[1] = 0.1;
  CHECK_THROWS_AS(model.flux(xi, F), RangeError);
}

TEST_CASE("model JSON round trip") {
  const auto closed = EffectiveModel::closed(2, {1.5, 0.1, 0.1, 2.0}, 0.7, 3.0);
  const auto back = EffectiveModel::from_json(closed.to_json());
  CHECK(back.tensor() == closed.tensor());
  CHECK(back.beta() == closed.beta());
  const auto table = EffectiveModel::table({{-1.0, 0.0, 1.0}}, {-1, 0, 1}, {-0.5, 0, 0.5});
  const auto t2 = EffectiveModel::from_json(table.to_json());
  CHECK(t2.axes() == table.axes());
  CHECK(t2.M_values() == table.M_values());
  auto bad = closed.to_json();
  bad["extra"] = 1;
  CHECK_THROWS_AS(EffectiveModel::from_json(bad), ParseError);
}

TEST_CASE("corrector sidecar round trip") {
  const auto op = scalar_op(1, two_plus_sin(1), std::nullopt);
  const double xi = 1.0;
  CellOptions opts;
  opts.grid = 16;
  const auto sol = solve_cell_problem(op, std::span<const double>(&xi, 1), opts);
  const auto dir = std::filesystem::temp_directory_path() / "homog_corrector_test";
  std::filesystem::create_directories(dir);
  const auto doc = cell_solution_to_json(sol, "cell.bin", dir);
  std::vector<std::uint64_t> dims;
  const auto values = read_grid_sidecar(dir / doc["corrector"]["path"].get<std::string>(), dims);
  CHECK(dims == std::vector<std::uint64_t>{1, 16});
  CHECK(values == sol.slices[0].corrector);
  CHECK(doc["flux"][0].get<double>() == sol.flux[0]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("homogenized densities") {
  const std::vector<double> x{0.3}, xi{1.5};
  ConvexDensity trivial;
  trivial.a = OscillatoryField::constant(1.0);
  CellOptions opts;
  opts.grid = 32;
  const auto t = homogenized_density(trivial, x, xi, opts);
  CHECK(t.value == doctest::Approx(0.5 * 2.25));
  for (double v : t.corrector) CHECK(std::abs(v) < 1e-12);

  ConvexDensity periodic;
  periodic.a = two_plus_sin(1);
  periodic.weight = macro::MacroFunction::constant(1, 2.0);
  const auto d = homogenized_density(periodic, x, xi);
  CHECK(std::abs(d.value - 2.0 * 0.5 * std::sqrt(3.0) * 2.25) < 1e-6);

  ConvexDensity slow;
  slow.a = OscillatoryField(CellGeometry::slow_oscillation(1.0 / 3.0, {0.0}), fields::SlowOscillation{2.0, {{1.0, {0.0}}}});
  const auto s = homogenized_density(slow, x, xi);
  CHECK(std::abs(s.value - 0.5 * std::sqrt(3.0) * 2.25) < 1e-2);
}

TEST_CASE("homogenized density is below every trial corrector energy") {
  ConvexDensity f;
  f.a = two_plus_sin(1);
  f.b = halves(0.5, 1.5);
  f.p = 3.0;
  const std::vector<double> x{0.0}, xi{0.8};
  CellOptions opts;
  opts.grid = 32;
  const auto d = homogenized_density(f, x, xi, opts);
  CHECK(density_energy(f, x, xi, d.corrector, opts.grid) == doctest::Approx(d.value).epsilon(1e-12));
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 0.05);
  for (int trial = 0; trial < 20; ++trial) {
    auto w = d.corrector;
    for (double& v : w) v += g(rng);
    CHECK(density_energy(f, x, xi, w, opts.grid) >= d.value);
  }
}

TEST_CASE("operator validation") {
  CHECK_THROWS_AS(scalar_op(1, two_plus_sin(1), OscillatoryField::constant(1.0), 2.5).validate(), InvalidOperator);
  const auto neg = OscillatoryField::trig(CellGeometry::periodic(1), {{{1}, 1.0, 0.0}});
  CHECK_THROWS_AS(scalar_op(1, neg, std::nullopt).validate(), InvalidOperator);
  MonotoneCellOperator asym;
  asym.dimension = 2;
  const auto geo = CellGeometry::periodic(2);
  asym.a = std::vector<OscillatoryField>{OscillatoryField::constant(2, geo), OscillatoryField::constant(1, geo),
                                         OscillatoryField::constant(0, geo), OscillatoryField::constant(2, geo)};
  CHECK_THROWS_AS(asym.validate(), InvalidOperator);
  auto bounded = scalar_op(1, std::nullopt, halves(1.0, 8.0));
  bounded.c1 = 0.5;
  CHECK_THROWS_AS(bounded.validate(), InvalidOperator);
  CHECK_THROWS_AS(scalar_op(1, std::nullopt, std::nullopt).validate(), InvalidOperator);
}
