// Acceptance suite: one PASS/FAIL line per criterion (sub-checks indented).
// Usage: acceptance [criterion numbers...]; no arguments runs all ten.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "homog/correctors.hpp"
#include "homog/multiscale_solvers.hpp"
#include "homog/oscillator_fields.hpp"
#include "homog/report_io.hpp"
#include "homog/sigma_limits.hpp"
#include "homog/studies.hpp"
#include "homog/young_measures.hpp"

using namespace homog;
using fields::CellGeometry;
using fields::MeanMethod;
using fields::OscillatoryField;
using macro::MacroFunction;
using macro::SeparableField;
using sigma::MacroDomain;
using sigma::OscillatorySequence;
using sigma::TwoScaleFunction;

namespace {

const double kPi = std::numbers::pi;
const CellGeometry kCell = CellGeometry::periodic(1);

std::string num(double v) { return report::format_short(v); }

// Sub-check collector: a criterion passes when every sub-check does.
class Checks {
 public:
  void add(bool ok, const std::string& what) {
    lines_.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    pass_ = pass_ && ok;
  }
  bool pass() const { return pass_; }
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  bool pass_ = true;
  std::vector<std::string> lines_;
};

bool decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s + "]";
}

double midpoint(const std::function<double(double)>& f, double lo = 0.0, double hi = 1.0, int n = 200000) {
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += f(lo + (i + 0.5) * h);
  return s * h;
}

double midpoint2(const std::function<double(double, double)>& f, int n = 1000) {
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s += f((i + 0.5) / n, (j + 0.5) / n);
  return s / (static_cast<double>(n) * n);
}

OscillatoryField trig1(std::vector<fields::TrigTerm> terms) { return OscillatoryField::trig(kCell, std::move(terms)); }
OscillatoryField sin_y(int k = 1) { return trig1({{{k}, 1.0, -kPi / 2}}); }
OscillatoryField cos_y(int k = 1) { return trig1({{{k}, 1.0, 0.0}}); }
OscillatoryField two_plus_sin(int dim = 1, int axis = 0) {
  std::vector<int> k0(static_cast<std::size_t>(dim), 0), k1 = k0;
  k1[static_cast<std::size_t>(axis)] = 1;
  return OscillatoryField::trig(CellGeometry::periodic(dim), {{k0, 2.0, 0.0}, {k1, 1.0, -kPi / 2}});
}
MacroFunction one() { return MacroFunction::constant(1, 1.0); }
MacroFunction x_pow(int p) { return MacroFunction::monomial(1, 0, p); }
SeparableField sep(const MacroFunction& g, const OscillatoryField& h) { return SeparableField::product(g, h); }
SeparableField xonly(const MacroFunction& g) { return SeparableField::macro_only(g, kCell); }

// A separable field with its pointwise formula for the oracles.
struct Pair {
  std::string name;
  SeparableField field;
  std::function<double(double, double)> f;
};

std::vector<Pair> test_catalog() {
  return {{"1", xonly(one()), [](double, double) { return 1.0; }},
          {"x^2", xonly(x_pow(2)), [](double x, double) { return x * x; }},
          {"sin(2 pi y)", sep(one(), sin_y()), [](double, double y) { return std::sin(2 * kPi * y); }},
          {"x cos(2 pi y)", sep(x_pow(1), cos_y()), [](double x, double y) { return x * std::cos(2 * kPi * y); }},
          {"sin(2 pi x) cos(4 pi y)", sep(MacroFunction::sine(1, 0, 1.0), cos_y(2)),
           [](double x, double y) { return std::sin(2 * kPi * x) * std::cos(4 * kPi * y); }}};
}

std::vector<Pair> sequence_catalog() {
  return {{"sin(2 pi y)", sep(one(), sin_y()), [](double, double y) { return std::sin(2 * kPi * y); }},
          {"x cos(2 pi y)", sep(x_pow(1), cos_y()), [](double x, double y) { return x * std::cos(2 * kPi * y); }},
          {"x^2", xonly(x_pow(2)), [](double x, double) { return x * x; }},
          {"3", xonly(MacroFunction::constant(1, 3.0)), [](double, double) { return 3.0; }},
          {"2 + sin(2 pi y)", SeparableField::product(one(), two_plus_sin()),
           [](double, double y) { return 2 + std::sin(2 * kPi * y); }},
          {"sin(2 pi x) sin(4 pi y)", sep(MacroFunction::sine(1, 0, 1.0), sin_y(2)),
           [](double x, double y) { return std::sin(2 * kPi * x) * std::sin(4 * kPi * y); }}};
}

// --- 1 ----------------------------------------------------------------------

void mean_values(Checks& c) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> kd(-4, 4), kd2(-2, 2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int agree = 0;
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const int dim = trial < 7 ? 1 : 2;
    std::vector<fields::TrigTerm> terms;
    double oracle = 0.0;
    for (int j = 0; j < 5; ++j) {
      std::vector<int> k(static_cast<std::size_t>(dim));
      for (auto& v : k) v = dim == 1 ? kd(rng) : kd2(rng);
      terms.push_back({k, u(rng), kPi * u(rng)});
      if (std::all_of(k.begin(), k.end(), [](int v) { return v == 0; }))
        oracle += terms.back().amplitude * std::cos(terms.back().phase);
    }
    const auto f = OscillatoryField::trig(CellGeometry::periodic(dim), terms);
    const auto exact = fields::mean_value(f, MeanMethod::Exact);
    const auto win = fields::mean_value(f, MeanMethod::ExpandingWindow);
    const double gap = std::abs(exact.value - win.value);
    worst = std::max(worst, gap);
    if (gap <= win.error && !win.divergent && std::abs(exact.value - oracle) <= 1e-14) ++agree;
  }
  c.add(agree == 10, std::to_string(agree) + "/10 trig polynomials: |exact - window| <= window error, exact = "
                         "constant-mode oracle (worst gap " + num(worst) + ")");

  const OscillatoryField slow{CellGeometry::slow_oscillation(1.0 / 3.0, {0.0}), fields::SlowOscillation{0.0, {{1.0, {0.0}}}}};
  const auto est = fields::mean_value(slow, MeanMethod::ExpandingWindow);
  c.add(std::abs(est.value) <= 1e-3 && !est.divergent, "mean of cos(z^(1/3)) = " + num(est.value) + " within 1e-3 of 0");

  // Largest Gaussian window against an independent Simpson rule in t = z^(1/3).
  const double r = est.radii.back();
  const double T = std::cbrt(6.0 * r);
  const int n = 4000000;
  const double h = T / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * 3 * t * t * std::cos(t) * std::exp(-std::pow(t, 6) / (r * r));
  }
  const double window_oracle = acc * h / 3.0 / (r * std::sqrt(kPi) / 2.0 * std::erf(6.0));
  c.add(std::abs(est.window_values.back() - window_oracle) < 1e-9,
        "window value at r = " + num(r) + " matches the quadrature oracle " + num(window_oracle));
  // Ball averages decay like 3 sin(R^(1/3)) / R^(1/3); the window estimate is within that envelope.
  const double envelope = 3.0 / std::cbrt(r);
  c.add(std::abs(est.value) <= envelope, "|estimate| <= 3 / R^(1/3) = " + num(envelope));
}

// --- 2 ----------------------------------------------------------------------

void sigma_convergence(Checks& c) {
  const MacroDomain Q;
  const auto tests = test_catalog();
  std::vector<SeparableField> test_fields;
  for (const auto& t : tests) test_fields.push_back(t.field);
  sigma::CheckOptions opts;
  for (const auto& s : sequence_catalog()) {
    const auto seq = OscillatorySequence::pure_oscillation(Q, s.field);
    const TwoScaleFunction limit(Q, s.field);
    const auto weak = sigma::check_weak_sigma(seq, limit, test_fields, opts);
    const auto strong = sigma::check_strong_sigma(seq, limit, 2.0, test_fields, opts);
    double worst = 0, oracle_gap = 0;
    bool tail = true;
    for (std::size_t i = 0; i < tests.size(); ++i) {
      const auto& rep = weak.reports[i];
      const double oracle = midpoint2([&](double x, double y) { return s.f(x, y) * tests[i].f(x, y); });
      oracle_gap = std::max(oracle_gap, std::abs(rep.limit - oracle));
      const double err = std::abs(rep.values.back() - oracle);
      worst = std::max(worst, err);
      const std::size_t n = rep.values.size();
      tail = tail && std::abs(rep.values[n - 1] - oracle) <= std::abs(rep.values[n - 2] - oracle) + 1e-11;
    }
    const double norm_oracle = std::sqrt(midpoint2([&](double x, double y) { return std::pow(s.f(x, y), 2); }));
    const auto& norm_rep = strong.reports.back();
    const bool norm_ok = std::abs(norm_rep.values.back() - norm_oracle) <= 1e-3;
    c.add(weak.pass && strong.pass && worst <= 1e-3 && tail && oracle_gap <= 1e-6 && norm_ok,
          s.name + ": weak " + (weak.pass ? "pass" : "fail") + ", strong " + (strong.pass ? "pass" : "fail") +
              ", final error vs oracle " + num(worst) + ", L2 norm " + num(norm_rep.values.back()) + " vs " +
              num(norm_oracle));
  }
  const auto u = OscillatorySequence::pure_oscillation(Q, sep(one(), sin_y()));
  const auto v = OscillatorySequence::pure_oscillation(Q, sep(one(), cos_y()));
  const TwoScaleFunction ul(Q, sep(one(), sin_y())), vl(Q, sep(one(), cos_y()));
  const auto sc = sigma::check_product(u, ul, v, vl, {xonly(one())}, {2.0, 2.0});
  const auto ss = sigma::check_product(u, ul, u, ul, {xonly(one())}, {2.0, 2.0});
  const double sc_val = sc.reports[0].values.back(), ss_val = ss.reports[0].values.back();
  c.add(sc.pass && std::abs(sc_val) <= 1e-3, "sin x cos -> " + num(sc_val) + " (limit 0)");
  c.add(ss.pass && std::abs(ss_val - 0.5) <= 1e-3, "sin x sin -> " + num(ss_val) + " (limit 1/2)");
}

// --- 3 ----------------------------------------------------------------------

void gradient_decomposition(Checks& c) {
  const MacroDomain Q;
  const auto tests = test_catalog();
  std::vector<SeparableField> test_fields;
  for (const auto& t : tests) test_fields.push_back(t.field);
  // u0 = x^2, u1 = sin(2 pi x) sin(2 pi y) / (2 pi): Du0 + d_y u1 = 2x + sin(2 pi x) cos(2 pi y).
  const TwoScaleFunction u(Q, xonly(x_pow(2)), sep(MacroFunction::sine(1, 0, 1.0, 1.0 / (2 * kPi)), sin_y()));
  const auto grad = [](double x, double y) { return 2 * x + std::sin(2 * kPi * x) * std::cos(2 * kPi * y); };
  std::vector<double> oracles;
  for (const auto& t : tests) oracles.push_back(midpoint2([&](double x, double y) { return grad(x, y) * t.f(x, y); }));

  auto compare = [&](const sigma::SigmaCheck& check, bool random, const std::string& label) {
    double worst = 0, bound_worst = 0;
    bool ok = check.pass && check.reports.size() == tests.size();
    for (std::size_t i = 0; ok && i < tests.size(); ++i) {
      const auto& r = check.reports[i];
      const double err = std::abs(r.values.back() - oracles[i]);
      const double bound = 1e-3 + (random ? 3 * r.mc_sigma : 0.0);
      worst = std::max(worst, err);
      bound_worst = std::max(bound_worst, bound);
      ok = ok && err <= bound && std::abs(r.limit - oracles[i]) <= 1e-6;
    }
    c.add(ok, label + ": worst deviation from the oracle " + num(worst) + " (tolerance " + num(bound_worst) + ")");
  };
  // O(eps) boundary terms of x-dependent factors need eps below 1/256 to drop under 1e-3.
  sigma::CheckOptions fine;
  fine.epsilons.push_back(1.0 / 512);
  fine.epsilons.push_back(1.0 / 1024);
  compare(sigma::check_gradient_decomposition(u, test_fields, fine), false, "deterministic amplitude");

  sigma::CheckOptions mc = fine;
  mc.mc_samples = 10000;
  const sigma::AmplitudeLaw law{sigma::AmplitudeLaw::Kind::Uniform, 0.0, 2.0};
  compare(sigma::check_gradient_decomposition(u, test_fields, mc, law, true), true,
          "random amplitude U[0, 2], 10^4 samples, 3 sigma");

  // Time-dependent: u1 = t sin(2 pi y) cos(2 pi tau) / (2 pi) on Q x (0, 1).
  MacroDomain Qt;
  Qt.horizon = 1.0;
  const auto tau = cos_y();
  const MacroFunction g(2, {{1.0 / (2 * kPi), {0, 1}, {0, 0}, 0.0}});
  const TwoScaleFunction ut(Qt, SeparableField::macro_only(MacroFunction::monomial(2, 0, 2), kCell),
                            SeparableField::product(g, sin_y().with_time_factor(tau)));
  const std::vector<SeparableField> ttests{
      SeparableField::product(MacroFunction::constant(2, 1.0), cos_y().with_time_factor(tau)),
      SeparableField::macro_only(MacroFunction::constant(2, 1.0), kCell),
      SeparableField::macro_only(MacroFunction::monomial(2, 0, 1), kCell),
      SeparableField::product(MacroFunction::monomial(2, 1, 1), cos_y()),
      SeparableField::product(MacroFunction::monomial(2, 0, 1), sin_y().with_time_factor(tau))};
  // Oracle limits: int_0^1 int_0^1 <<(2x + t cos(2 pi y) cos(2 pi tau)) f>> with f from the list above.
  const std::vector<double> toracle{0.125, 1.0, 2.0 / 3.0, 0.0, 0.0};
  sigma::CheckOptions topts;
  topts.epsilons = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  const auto tc = sigma::check_gradient_decomposition(ut, ttests, topts);
  double worst = 0;
  bool ok = tc.pass && tc.reports.size() == ttests.size();
  for (std::size_t i = 0; ok && i < ttests.size(); ++i) {
    worst = std::max(worst, std::abs(tc.reports[i].values.back() - toracle[i]));
    ok = ok && std::abs(tc.reports[i].limit - toracle[i]) <= 1e-9;
  }
  c.add(ok && worst <= 1e-3, "time-dependent corrector: worst deviation " + num(worst));
}

// --- 4 ----------------------------------------------------------------------

void young_measures(Checks& c) {
  const double eps = 1.0 / 64;
  auto target = [](std::function<double(double, double)> f) {
    return TwoScaleFunction(MacroDomain{}, kCell, [f](auto X, auto y, double) { return f(X[0], y[0]); });
  };
  for (const auto& s : sequence_catalog()) {
    const auto seq = OscillatorySequence::pure_oscillation(MacroDomain{}, s.field);
    const auto nu = young::estimate_young_measure(seq, eps);
    const double dev = young::barycenter_deviation(nu, target(s.f));
    const double bound = nu.lambda_width() + 1e-3;
    c.add(!nu.starved() && dev <= bound, "barycenter of " + s.name + ": deviation " + num(dev) + " <= " + num(bound));
  }
  const auto seq = OscillatorySequence::pure_oscillation(MacroDomain{}, sep(one(), sin_y()));
  const auto nu = young::estimate_young_measure(seq, eps);
  const auto strong = young::dirac_test(nu, seq, target([](double, double y) { return std::sin(2 * kPi * y); }), 0.0);
  c.add(strong.is_dirac && strong.l1_distance <= nu.lambda_width(),
        "sin(2 pi x/eps) vs sin(2 pi y): distance " + num(strong.l1_distance) + " <= bin width " + num(nu.lambda_width()));
  const auto weak = young::dirac_test(nu, seq, target([](double, double) { return 0.0; }), 1e-3);
  const double two_over_pi = midpoint([](double y) { return std::abs(std::sin(2 * kPi * y)); });
  c.add(!weak.is_dirac && std::abs(weak.l1_distance - two_over_pi) <= 0.02,
        "sin(2 pi x/eps) vs 0: distance " + num(weak.l1_distance) + " = 2/pi +- 0.02");

  const std::vector<double> tail{1.0 / 16, 1.0 / 32, 1.0 / 64};
  const std::vector<std::pair<std::string, young::Integrand>> integrands{
      {"0", [](double, double, double) { return 0.0; }},
      {"1", [](double, double, double) { return 1.0; }},
      {"|l|", [](double, double, double l) { return std::abs(l); }},
      {"l^2", [](double, double, double l) { return l * l; }},
      {"(2 + sin 2 pi y) l^2", [](double, double y, double l) { return (2 + std::sin(2 * kPi * y)) * l * l; }},
      {"x l^4", [](double x, double, double l) { return x * std::pow(l, 4); }},
      {"max(l, 0)", [](double, double, double l) { return std::max(l, 0.0); }}};
  int held = 0;
  int total = 0;
  for (const auto& s : sequence_catalog()) {
    const auto sq = OscillatorySequence::pure_oscillation(MacroDomain{}, s.field);
    const auto m = young::estimate_young_measure(sq, eps);
    for (const auto& [name, phi] : integrands) {
      ++total;
      if (young::check_lsc(m, phi, sq, tail).holds) ++held;
    }
  }
  c.add(held == total, "lower semicontinuity holds for " + std::to_string(held) + "/" + std::to_string(total) +
                           " (sequence, nonnegative integrand) pairs");
}

// --- 5 ----------------------------------------------------------------------

// Flux-constant oracle for a s + b |s|^{p-2} s = c by nested bisection.
double oracle_flux(const std::function<double(double)>& a, const std::function<double(double)>& b, double p, double xi) {
  const int n = 4096;
  auto s_of = [&](double av, double bv, double c) {
    double lo = -1e3, hi = 1e3;
    for (int it = 0; it < 64; ++it) {
      const double s = 0.5 * (lo + hi);
      (av * s + bv * std::pow(std::abs(s), p - 2) * s > c ? hi : lo) = s;
    }
    return 0.5 * (lo + hi);
  };
  auto mean_s = [&](double c) {
    double total = 0;
    for (int k = 0; k < n; ++k) {
      const double y = (k + 0.5) / n;
      total += s_of(a(y), b(y), c) / n;
    }
    return total;
  };
  double lo = -1e3, hi = 1e3;
  for (int it = 0; it < 64; ++it) {
    const double c = 0.5 * (lo + hi);
    (mean_s(c) > xi ? hi : lo) = c;
  }
  return 0.5 * (lo + hi);
}

correctors::MonotoneCellOperator scalar_op(std::optional<OscillatoryField> a, std::optional<OscillatoryField> b,
                                           double p, int dim = 1) {
  correctors::MonotoneCellOperator op;
  op.dimension = dim;
  if (a) op.a = std::vector<OscillatoryField>{*a};
  op.b = std::move(b);
  op.p = p;
  return op;
}

void cell_oracles(Checks& c) {
  const auto lin = scalar_op(two_plus_sin(), std::nullopt, 2.0);
  const auto mixed = scalar_op(two_plus_sin(), OscillatoryField::constant(1.0), 3.0);
  const auto a_fn = [](double y) { return 2 + std::sin(2 * kPi * y); };
  for (const auto& [label, op, b_fn] :
       {std::tuple{std::string("linear a = 2 + sin"), lin, std::function<double(double)>([](double) { return 0.0; })},
        std::tuple{std::string("a = 2 + sin, b = 1, p = 3"), mixed, std::function<double(double)>([](double) { return 1.0; })}}) {
    double worst = 0, worst_oracle = 0;
    for (double xi : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
      const auto grid = correctors::solve_cell_problem(op, std::span<const double>(&xi, 1));
      const auto closed = correctors::solve_cell_1d_closed_form(op, xi);
      worst = std::max(worst, std::abs(grid.flux[0] - closed.flux[0]));
      worst_oracle = std::max(worst_oracle, std::abs(closed.flux[0] - oracle_flux(a_fn, b_fn, op.p, xi)));
    }
    c.add(worst <= 1e-5 && worst_oracle <= 1e-6, label + ": grid vs closed form over xi in {-2..2}: " + num(worst) +
                                                     ", closed form vs bisection oracle " + num(worst_oracle));
  }
  const double xi = 1.0;
  const double harmonic = 1.0 / midpoint([&](double y) { return 1.0 / a_fn(y); });
  const double h_grid = correctors::solve_cell_problem(lin, std::span<const double>(&xi, 1)).flux[0];
  c.add(std::abs(h_grid - std::sqrt(3.0)) <= 1e-6 && std::abs(harmonic - std::sqrt(3.0)) <= 1e-9,
        "harmonic mean: grid flux " + num(h_grid) + " = sqrt(3) +- 1e-6");

  const OscillatoryField halves{kCell, fields::PiecewiseConstant{{{0.5}}, {1.0, 8.0}}};
  const auto pl = scalar_op(std::nullopt, halves, 3.0);
  const double expected = std::pow(midpoint([](double y) { return 1.0 / std::sqrt(y < 0.5 ? 1.0 : 8.0); }), -2.0);
  const double g = correctors::solve_cell_problem(pl, std::span<const double>(&xi, 1)).flux[0];
  const double cf = correctors::solve_cell_1d_closed_form(pl, xi).flux[0];
  c.add(std::abs(g - expected) <= 1e-5 && std::abs(cf - expected) <= 1e-5 &&
            std::abs(expected - std::pow(0.5 + 0.5 / std::sqrt(8.0), -2.0)) <= 1e-9,
        "p = 3 laminate b in {1, 8}: grid " + num(g) + ", closed " + num(cf) + ", <b^(-1/2)>^(-2) = " + num(expected));
}

// --- 6 ----------------------------------------------------------------------

void laminate(Checks& c) {
  const auto op = scalar_op(two_plus_sin(2, 0), std::nullopt, 2.0, 2);
  correctors::CellOptions opts;
  opts.grid = 128;
  const auto T = correctors::closed_effective_model(op, opts).tensor();
  // Laminate oracle: harmonic mean across the layers, arithmetic mean along them.
  const double across = 1.0 / midpoint([](double y) { return 1.0 / (2 + std::sin(2 * kPi * y)); });
  const double along = midpoint([](double y) { return 2 + std::sin(2 * kPi * y); });
  const double dev = std::max({std::abs(T[0] - across), std::abs(T[1]), std::abs(T[2]), std::abs(T[3] - along)});
  c.add(dev <= 1e-3, "tensor [" + num(T[0]) + ", " + num(T[1]) + "; " + num(T[2]) + ", " + num(T[3]) +
                         "] vs diag(sqrt 3, 2): max deviation " + num(dev));
}

// --- 7 ----------------------------------------------------------------------

// Exact minimum of int a(x/eps) u'^2 / 2 - u over H^1_0(0, 1): the flux is c - x
// with c fixed by int u' = 0, and the minimum is -int (c - x)^2 / a / 2.
double exact_min_energy(const std::function<double(double)>& a) {
  const int n = 2000000;
  double m0 = 0, m1 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) / n, w = 1.0 / a(x);
    m0 += w;
    m1 += x * w;
  }
  const double c = m1 / m0;
  return -0.5 * midpoint([&](double x) { return (c - x) * (c - x) / a(x); }, 0.0, 1.0, n);
}

void functional(Checks& c, const std::string& label, const correctors::ConvexDensity& f, double oracle_coefficient,
                const std::function<double(double)>& a_of_y) {
  using namespace solvers;
  const auto model = density_model(f);
  MinimizeProblem prob;
  prob.domain.cells = {1024};
  const auto hom = minimize_homogenized_functional(model, f.weight, prob);
  std::vector<double> gaps, oracle_gaps;
  double dist = 0, energy_dev = 0;
  const double hom_oracle = -1.0 / (24.0 * oracle_coefficient);
  for (double eps : {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64}) {
    const auto u = minimize_functional_eps(f, eps, prob);
    gaps.push_back(std::abs(u.energy - hom.energy));
    dist = l2_norm(*u.mesh, u.final_state() - hom.final_state());
    const double e = exact_min_energy([&](double x) { return a_of_y(x / eps); });
    oracle_gaps.push_back(std::abs(e - hom_oracle));
    energy_dev = std::max({energy_dev, std::abs(u.energy - e), std::abs(hom.energy - hom_oracle)});
  }
  c.add(energy_dev <= 1e-6, label + ": discrete minima within " + num(energy_dev) + " of the exact 1D minima; exact gaps " +
                                list(oracle_gaps));
  c.add(std::abs(model.tensor()[0] - oracle_coefficient) <= 1e-6,
        label + ": effective coefficient " + num(model.tensor()[0]) + " vs oracle " + num(oracle_coefficient));
  c.add(decreasing(gaps), label + ": energy gaps " + list(gaps) + " decrease");
  c.add(gaps.back() <= 1e-2, label + ": final gap " + num(gaps.back()) + " <= 1e-2");
  c.add(dist <= 5e-2, label + ": minimizer L2 distance at eps = 1/64 " + num(dist) + " <= 5e-2");
}

void functionals(Checks& c) {
  correctors::ConvexDensity periodic;
  periodic.a = two_plus_sin();
  functional(c, "periodic", periodic, 1.0 / midpoint([](double y) { return 1.0 / (2 + std::sin(2 * kPi * y)); }),
             [](double y) { return 2 + std::sin(2 * kPi * y); });

  correctors::ConvexDensity slow;
  slow.a = OscillatoryField{CellGeometry::slow_oscillation(1.0 / 3.0, {0.0}), fields::SlowOscillation{2.0, {{1.0, {0.0}}}}};
  // The slow oscillation equidistributes its phase, so the mean is the phase average.
  functional(c, "slow oscillation (non-ergodic)", slow,
             1.0 / midpoint([](double t) { return 1.0 / (2 + std::cos(t)); }, 0.0, 2 * kPi) * 2 * kPi,
             [](double y) { return 2 + std::cos(std::cbrt(std::abs(y))); });
}

// --- 8 ----------------------------------------------------------------------

void parabolic(Checks& c) {
  using namespace solvers;
  StudyConfig st;
  st.base.domain.cells = {512};
  st.base.op.dimension = 1;
  st.base.op.a = std::vector<OscillatoryField>{two_plus_sin()};
  st.base.initial = MacroFunction::sine(1, 0, 0.5);
  st.base.forcing = {MacroFunction::constant(1, 1.0)};
  st.eps_list = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  const auto rep = convergence_study(st);
  std::vector<double> e;
  for (const auto& l : rep.levels) e.push_back(l.median);
  c.add(decreasing(e), "scalar 1D errors " + list(e) + " decrease");
  c.add(e.back() <= e.front() / 4, "e(1/64) = " + num(e.back()) + " <= e(1/8) / 4 = " + num(e.front() / 4));

  EvolutionConfig v;
  v.mode = EvolutionMode::Vector;
  v.domain = {{0.0, 0.0}, {1.0, 1.0}, {64, 64}};
  v.T = 0.05;
  v.op.mode = correctors::Mode::Vector;
  v.op.dimension = 2;
  v.op.a = std::vector<OscillatoryField>{two_plus_sin(2, 0)};
  v.initial = MacroFunction::sine(2, 0, 1.0, 0.2) * MacroFunction::sine(2, 1, 1.0);
  const std::vector<double> ladder{1.0 / 2, 1.0 / 4, 1.0 / 8};
  v.dt = 0.25 * ladder.back() * ladder.back();
  correctors::CellOptions cell;
  cell.grid = 64;
  const auto model = evolution_model(v, cell);
  const auto hom = solve_parabolic_homogenized(model, v);
  std::vector<double> ve;
  double div = hom.max_divergence;
  for (double eps : ladder) {
    v.eps = eps;
    const auto u = solve_parabolic_eps(v);
    div = std::max(div, u.max_divergence);
    ve.push_back(l2_qt_distance(u, hom));
  }
  c.add(div <= 1e-8, "vector 2D: max discrete divergence " + num(div) + " <= 1e-8");
  c.add(decreasing(ve), "vector 2D errors " + list(ve) + " decrease");
}

// --- 9 ----------------------------------------------------------------------

void stochastic(Checks& c) {
  using namespace solvers;
  EvolutionConfig cfg;
  cfg.domain.cells = {256};
  cfg.op.dimension = 1;
  cfg.op.a = std::vector<OscillatoryField>{two_plus_sin()};
  cfg.forcing = {MacroFunction::constant(1, 1.0)};
  cfg.eps = 1.0 / 8;

  // g = 0: the noise mode carries neither alpha nor beta.
  auto zero = cfg;
  zero.initial = MacroFunction::sine(1, 0, 0.5);
  zero.noise.modes.resize(1);
  const wiener::WienerPath path(3, 1, zero.steps(), zero.T / zero.steps());
  const auto det = solve_parabolic_eps(zero);
  const auto sto = solve_spde_eps(zero, path);
  const auto model = evolution_model(zero);
  const auto det_h = solve_parabolic_homogenized(model, zero);
  const auto sto_h = solve_spde_homogenized(model, zero, path);
  bool same = det.states.size() == sto.states.size() && det_h.states.size() == sto_h.states.size();
  for (std::size_t n = 0; same && n < det.states.size(); ++n)
    same = (det.states[n].array() == sto.states[n].array()).all() &&
           (det_h.states[n].array() == sto_h.states[n].array()).all();
  c.add(same, "g = 0 reproduces the deterministic trajectories bitwise (" + std::to_string(det.states.size()) + " states)");

  StudyConfig st;
  st.base = cfg;
  st.base.noise.modes.push_back({std::nullopt, OscillatoryField::constant(0.5), MacroFunction::constant(1, 1.0)});
  st.eps_list = {1.0 / 8, 1.0 / 16, 1.0 / 32};
  st.trials = 64;
  st.stochastic = true;
  st.seed = 7;
  const auto rep = convergence_study(st);
  // Medians and ensemble statistics recomputed from the per-trial rows.
  std::vector<double> medians, sup;
  for (double eps : st.eps_list) {
    std::vector<double> errs;
    double s = 0;
    for (const auto& r : rep.rows)
      if (r.eps == eps) {
        errs.push_back(r.error);
        s += r.sup_l2sq;
      }
    std::sort(errs.begin(), errs.end());
    const std::size_t n = errs.size();
    medians.push_back(n % 2 ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]));
    sup.push_back(s / static_cast<double>(n));
  }
  c.add(rep.rows.size() == 3 * 64, std::to_string(rep.rows.size()) + " trajectories over common Wiener paths");
  c.add(decreasing(medians), "median errors " + list(medians) + " decrease");
  const double hi = *std::max_element(sup.begin(), sup.end()), lo = *std::min_element(sup.begin(), sup.end());
  const double spread = (hi - lo) / hi;
  c.add(spread <= 0.05, "E sup |u|^2 per level " + list(sup) + ": spread " + num(spread) + " <= 5%");
}

// --- 10 ---------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void reproducibility(Checks& c) {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "homog_acceptance_repro";
  fs::remove_all(root);
  std::vector<studies::Scenario> runs;
  for (const char* name : {"periodic-1d-linear", "periodic-1d-spde", "quasiperiodic-1d-minimize", "slow-oscillation-mean"})
    runs.push_back(studies::find_scenario(name));
  for (const auto& s : runs) {
    const auto a = studies::run_experiment(s.config, {root / s.name / "a", std::nullopt, 1});
    const auto b = studies::run_experiment(s.config, {root / s.name / "b", std::nullopt, 2});
    int csv = 0;
    bool same = a.artifacts == b.artifacts;
    for (const auto& art : a.artifacts) {
      if (art.extension() != ".csv") continue;
      ++csv;
      same = same && slurp(root / s.name / "a" / art) == slurp(root / s.name / "b" / art);
    }
    c.add(same && csv > 0, s.name + ": " + std::to_string(csv) + " CSV artifacts byte-identical on rerun");
  }
  fs::remove_all(root);
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Checks&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "mean-value suite", mean_values},
      {2, "sigma-convergence suite", sigma_convergence},
      {3, "gradient decomposition", gradient_decomposition},
      {4, "Young-measure suite", young_measures},
      {5, "1D cell-problem oracle equivalence", cell_oracles},
      {6, "2D laminate effective tensor", laminate},
      {7, "functional homogenization", functionals},
      {8, "deterministic parabolic homogenization", parabolic},
      {9, "stochastic pipeline", stochastic},
      {10, "reproducibility", reproducibility},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& cr : all) {
    if (!wanted.empty() && !wanted.count(cr.id)) continue;
    Checks checks;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.run(checks);
    } catch (const std::exception& e) {
      checks.add(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (checks.pass() ? "PASS" : "FAIL") << " criterion " << cr.id << ": " << cr.name << " ("
              << num(std::round(secs * 10) / 10) << " s)\n";
    for (const auto& l : checks.lines()) std::cout << "       " << l << "\n";
    std::cout.flush();
    if (!checks.pass()) ++failed;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria pass")) << "\n";
  return failed ? 1 : 0;
}
