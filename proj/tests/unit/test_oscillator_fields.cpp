#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "homog/error.hpp"
#include "homog/field_io.hpp"
#include "homog/oscillator_fields.hpp"

using namespace homog;
using namespace homog::fields;

namespace {

const double kPi = std::numbers::pi;

OscillatoryField sin_field(double shift = 0.0) {
  // 2 + sin(2 pi y) as amplitude/phase pairs.
  return OscillatoryField::trig(CellGeometry::periodic(1), {{{0}, 2.0 + shift, 0.0}, {{1}, 1.0, -kPi / 2}});
}

OscillatoryField slow_field() {
  return {CellGeometry::slow_oscillation(1.0 / 3.0, {0.0}), SlowOscillation{0.0, {{1.0, {0.0}}}}};
}

// Independent midpoint rule over one period.
double midpoint_mean(const std::function<double(double)>& f, double period = 1.0, int n = 200000) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += f((i + 0.5) * period / n);
  return s / n;
}

OscillatoryField random_trig(std::mt19937_64& rng, int dim = 1, int kmax = 4) {
  std::uniform_int_distribution<int> kd(-kmax, kmax);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<TrigTerm> terms;
  for (int j = 0; j < 5; ++j) {
    std::vector<int> k(static_cast<std::size_t>(dim));
    for (auto& v : k) v = kd(rng);
    terms.push_back({k, u(rng), kPi * u(rng)});
  }
  return OscillatoryField::trig(CellGeometry::periodic(dim), terms);
}

}  // namespace

TEST_CASE("evaluate examples") {
  CHECK(sin_field()(0.25) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(slow_field()(0.0) == 1.0);
  GridSample g{{256}, {}, 1};
  for (int i = 0; i < 256; ++i) g.values.push_back(std::sin(2 * kPi * i / 256.0));
  OscillatoryField grid(CellGeometry::periodic(1), g);
  CHECK(std::abs(grid(0.1) - std::sin(0.2 * kPi)) < 1e-3);
  const std::vector<double> bad{0.1, 0.2};
  CHECK_THROWS_AS(grid(bad), UsageError);
}

TEST_CASE("generators (a)-(c) are exactly periodic") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  GridSample g{{8, 8}, std::vector<double>(64), 3};
  for (std::size_t i = 0; i < 64; ++i) g.values[i] = std::cos(0.37 * static_cast<double>(i));
  PiecewiseConstant pc{{{0.25, 0.5}, {0.7}}, {1, 2, 3, 4, 5, 6}};
  const std::vector<OscillatoryField> fs{random_trig(rng, 2), {CellGeometry::periodic(2), g},
                                         {CellGeometry::periodic(2), pc}};
  for (const auto& f : fs)
    for (int trial = 0; trial < 50; ++trial) {
      // Dyadic points keep y + 1 exact in floating point.
      const std::vector<double> y{std::ldexp(std::round(std::ldexp(u(rng), 20)), -20),
                                  std::ldexp(std::round(std::ldexp(u(rng), 20)), -20)};
      const std::vector<double> y1{y[0] + 1.0, y[1]};
      const std::vector<double> y2{y[0], y[1] - 2.0};
      CHECK(std::abs(f(y1) - f(y)) <= 1e-13 * (1 + std::abs(f(y))));
      CHECK(std::abs(f(y2) - f(y)) <= 1e-13 * (1 + std::abs(f(y))));
    }
}

TEST_CASE("exact mean values") {
  const auto est = mean_value(sin_field(), MeanMethod::Exact);
  CHECK(est.value == 2.0);
  CHECK(est.error == 0.0);
  PiecewiseConstant pc{{{0.5}}, {1.0, 8.0}};
  CHECK(mean_value(OscillatoryField(CellGeometry::periodic(1), pc), MeanMethod::Exact).value == doctest::Approx(4.5));
  CHECK_THROWS_AS(mean_value(slow_field(), MeanMethod::Exact), UnsupportedOperation);
}

TEST_CASE("slow oscillation mean via expanding windows") {
  const auto est = mean_value(slow_field(), MeanMethod::ExpandingWindow);
  CHECK(std::abs(est.value) < 1e-3);
  CHECK(est.error < 1e-3);
  CHECK_FALSE(est.divergent);
  REQUIRE(est.radii.size() == 9);
  CHECK(est.radii.front() == 1e3);

  // Independent oracle for the largest Gaussian window: substitute z = t^3 so
  // the integrand 3 t^2 cos(t) exp(-t^6/r^2) is smooth, Simpson's rule in t.
  const double r = est.radii.back();
  const double T = std::cbrt(6.0 * r);
  const int n = 4000000;
  const double h = T / n;
  double num = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    num += w * 3 * t * t * std::cos(t) * std::exp(-std::pow(t, 6) / (r * r));
  }
  num *= h / 3.0;
  const double den = r * std::sqrt(kPi) / 2.0 * std::erf(6.0);
  CHECK(std::abs(est.window_values.back() - num / den) < 1e-9);

  // Sharp windows converge only like 3 sin(R^{1/3}) / R^{1/3}: closed form check.
  const double R = 1e6, T1 = std::cbrt(R);
  const double sharp = 3 * std::sin(T1) / T1 + 6 * std::cos(T1) / (T1 * T1) - 6 * std::sin(T1) / (T1 * T1 * T1);
  CHECK(std::abs(sharp) > 1e-3);
}

TEST_CASE("quasiperiodic product has zero mean") {
  const auto geo = CellGeometry::quasiperiodic(1, {{1.0}, {std::sqrt(2.0)}});
  const auto a = OscillatoryField::trig(geo, {{{1, 0}, 1.0, 0.0}});
  const auto b = OscillatoryField::trig(geo, {{{0, 1}, 1.0, 0.0}});
  const auto ab = product(a, b);
  CHECK(mean_value(ab, MeanMethod::Exact).value == 0.0);
  const auto win = mean_value(ab, MeanMethod::ExpandingWindow);
  CHECK(std::abs(win.value) < 1e-4);
  CHECK(std::abs(mean_value(ab, MeanMethod::CellQuadrature).value) < 1e-12);
  const std::vector<double> y{0.37};
  CHECK(ab(y) == doctest::Approx(std::cos(2 * kPi * 0.37) * std::cos(2 * kPi * std::sqrt(2.0) * 0.37)));
  const auto sq = product(a, a);
  CHECK(mean_value(sq, MeanMethod::Exact).value == doctest::Approx(0.5));
}

TEST_CASE("exact and expanding-window agree for periodic trig polynomials") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    // Two-dimensional windows are costly; keep their frequencies low.
    const auto f = trial < 7 ? random_trig(rng) : random_trig(rng, 2, 2);
    const auto exact = mean_value(f, MeanMethod::Exact);
    const auto win = mean_value(f, MeanMethod::ExpandingWindow);
    CHECK(std::abs(exact.value - win.value) <= win.error);
    CHECK_FALSE(win.divergent);
  }
}

TEST_CASE("cell quadrature matches an independent midpoint rule") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto f = random_trig(rng);
    const auto est = mean_value(f, MeanMethod::CellQuadrature);
    CHECK(std::abs(est.value - midpoint_mean([&](double y) { return f(y); })) < 1e-10);
  }
}

TEST_CASE("Besicovitch seminorms") {
  const auto s = OscillatoryField::trig(CellGeometry::periodic(1), {{{1}, 1.0, -kPi / 2}});
  const double oracle = std::sqrt(midpoint_mean([](double y) { return std::pow(std::sin(2 * kPi * y), 2); }));
  CHECK(besicovitch_seminorm(s, 2.0, MeanMethod::Exact).value == doctest::Approx(oracle).epsilon(1e-10));
  CHECK(besicovitch_seminorm(s, 2.0, MeanMethod::CellQuadrature).value == doctest::Approx(oracle).epsilon(1e-10));
  for (double p : {1.0, 2.0, 3.5})
    CHECK(besicovitch_seminorm(OscillatoryField::constant(-1.7), p, MeanMethod::CellQuadrature).value ==
          doctest::Approx(1.7));
  PiecewiseConstant pc{{{0.5}}, {1.0, 8.0}};
  CHECK(besicovitch_seminorm(OscillatoryField(CellGeometry::periodic(1), pc), 1.0, MeanMethod::Exact).value ==
        doctest::Approx(4.5));
  CHECK_THROWS_AS(besicovitch_seminorm(s, 0.5, MeanMethod::Exact), UsageError);
}

TEST_CASE("seminorm never exceeds the probed supremum") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = random_trig(rng);
    const double sup = probe_sup(f, 4096);
    for (double p : {1.0, 2.0, 4.0, 8.0})
      CHECK(besicovitch_seminorm(f, p, MeanMethod::CellQuadrature).value <= sup * (1 + 1e-6) + 1e-9);
  }
}

TEST_CASE("cell derivatives") {
  const auto s = OscillatoryField::trig(CellGeometry::periodic(1), {{{1}, 1.0, -kPi / 2}});
  const auto ds = cell_derivative(s, 0);
  for (double y : {0.0, 0.1, 0.33, 0.9}) CHECK(ds(y) == doctest::Approx(2 * kPi * std::cos(2 * kPi * y)));
  const auto dc = cell_derivative(OscillatoryField::constant(3.0), 0);
  for (double y : {0.0, 0.5}) CHECK(dc(y) == 0.0);

  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = random_trig(rng);
    const auto df = cell_derivative(f, 0);
    CHECK(std::abs(mean_value(df, MeanMethod::Exact).value) < 1e-10);
    CHECK(std::abs(midpoint_mean([&](double y) { return df(y); })) < 1e-10);
  }
  PiecewiseConstant pc{{{0.5}}, {1.0, 8.0}};
  CHECK_THROWS_AS(cell_derivative(OscillatoryField(CellGeometry::periodic(1), pc), 0), UnsupportedOperation);

  GridSample g{{128}, {}, 3};
  for (int i = 0; i < 128; ++i) g.values.push_back(std::sin(2 * kPi * i / 128.0));
  const auto dg = cell_derivative(OscillatoryField(CellGeometry::periodic(1), g), 0);
  CHECK(std::abs(dg(0.3) - 2 * kPi * std::cos(0.6 * kPi)) < 1e-3);
}

TEST_CASE("translation invariance of the mean") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto f = random_trig(rng);
    const std::vector<double> a{u(rng)};
    const auto g = translate(f, a);
    CHECK(g(0.2) == doctest::Approx(f(0.2 + a[0])).epsilon(1e-9));
    const auto ef = mean_value(f, MeanMethod::ExpandingWindow);
    const auto eg = mean_value(g, MeanMethod::ExpandingWindow);
    CHECK(std::abs(ef.value - eg.value) <= ef.error + eg.error);
  }
  const std::vector<double> a{7.5};
  const auto ef = mean_value(slow_field(), MeanMethod::ExpandingWindow);
  const auto eg = mean_value(translate(slow_field(), a), MeanMethod::ExpandingWindow);
  CHECK(std::abs(ef.value - eg.value) <= ef.error + eg.error);
}

TEST_CASE("time factor composes as a product") {
  const auto tau = OscillatoryField::trig(CellGeometry::periodic(1), {{{0}, 1.0, 0.0}, {{1}, 0.5, 0.0}});
  const auto f = sin_field().with_time_factor(tau);
  const std::vector<double> y{0.25};
  CHECK(f(y, 0.0) == doctest::Approx(3.0 * 1.5));
  CHECK(mean_value(f, MeanMethod::Exact).value == doctest::Approx(2.0));
  const auto comp = mean_of_composition(f, [](double v) { return v * v; });
  // <(2 + sin)^2> <(1 + cos/2)^2> = 4.5 * 1.125
  CHECK(comp.value == doctest::Approx(4.5 * 1.125).epsilon(1e-10));
}

TEST_CASE("harmonic mean of the slow oscillation") {
  const OscillatoryField a(CellGeometry::slow_oscillation(1.0 / 3.0, {0.0}), SlowOscillation{2.0, {{1.0, {0.0}}}});
  const auto est = mean_of_composition(a, [](double v) { return 1.0 / v; });
  CHECK(std::abs(est.value - 1.0 / std::sqrt(3.0)) < 1e-3);
}

TEST_CASE("JSON round trips") {
  std::mt19937_64 rng(29);
  const auto tau = OscillatoryField::trig(CellGeometry::periodic(1, {2.0}), {{{1}, 0.5, 0.1}});
  const auto f = random_trig(rng, 2).with_time_factor(tau);
  CHECK(field_from_json(field_to_json(f)) == f);
  CHECK(field_from_json(field_to_json(slow_field())) == slow_field());

  GridSample g{{4, 5}, {}, 3};
  for (int i = 0; i < 20; ++i) g.values.push_back(std::sin(1.0 + i) * 1e-3 + i);
  const OscillatoryField grid(CellGeometry::periodic(2, {1.0, 0.5}), g);
  CHECK(field_from_json(field_to_json(grid)) == grid);

  const auto dir = std::filesystem::temp_directory_path() / "homog_field_io_test";
  std::filesystem::create_directories(dir);
  const auto doc = field_to_json(grid, {GridEncoding::Sidecar, "grid.bin"}, dir);
  CHECK(std::filesystem::file_size(dir / "grid.bin") == 20 * 8);
  CHECK(field_from_json(doc, "", dir) == grid);
  std::filesystem::remove_all(dir);

  auto bad = field_to_json(slow_field());
  bad["colour"] = 1;
  try {
    field_from_json(bad, "/field");
    FAIL("accepted unknown key");
  } catch (const ParseError& e) {
    CHECK(e.path() == "/field/colour");
  }
  CHECK(base64_decode(base64_encode({1.5, -2.25, 1e-300})) == std::vector<double>{1.5, -2.25, 1e-300});
}
