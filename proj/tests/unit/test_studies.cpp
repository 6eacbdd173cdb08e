#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "homog/config.hpp"
#include "homog/error.hpp"
#include "homog/studies.hpp"

using namespace homog;
using namespace homog::studies;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("homog_test_studies_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json toml(const std::string& text) { return config::parse_toml(text, "test.toml").data; }

const Criterion* find(const RunResult& r, const std::string& name) {
  for (const auto& c : r.criteria)
    if (c.name == name) return &c;
  return nullptr;
}

const char* kSmallStudy = R"(kind = "study"
eps_list = [0.25, 0.125, 0.0625]

[evolution]
T = 0.05
initial = [{k = [0.5], phase = -1.5707963267948966}]
forcing = [1.0]

[evolution.domain]
cells = [128]

[evolution.operator]
dimension = 1

[evolution.operator.a]
kind = "trig-polynomial"
geometry = {kind = "periodic-torus", dimension = 1}
terms = [[[0], 2.0], [[1], 1.0, -1.5707963267948966]]

[expect]
monotone = true
)";

}  // namespace

TEST_CASE("scenario catalog covers every family and round trips") {
  const auto& cat = scenario_catalog();
  CHECK(cat.size() >= 4);
  std::set<std::string> families, names;
  for (const auto& s : cat) {
    families.insert(s.family);
    names.insert(s.name);
    INFO(s.name);
    const auto e = parse_experiment(s.config);
    CHECK(e.kind == s.config.at("kind"));
    CHECK(parse_experiment(e.canonical).canonical == e.canonical);
    const auto again = config::parse_toml(config::to_toml(e.canonical)).data;
    CHECK(parse_experiment(again).canonical == e.canonical);
    CHECK(&find_scenario(s.name) != nullptr);
  }
  CHECK(names.size() == cat.size());
  CHECK(families == std::set<std::string>{"periodic", "quasiperiodic", "weakly-almost-periodic surrogate", "non-ergodic"});
  CHECK_THROWS_AS(find_scenario("no-such-scenario"), UsageError);
}

TEST_CASE("unknown keys and bad values are rejected with a pointer") {
  auto pointer = [](const json& doc) {
    try {
      parse_experiment(doc);
    } catch (const ParseError& e) {
      return e.path();
    }
    return std::string("<none>");
  };
  json doc = toml(kSmallStudy);
  CHECK(pointer(doc) == "<none>");
  json bad = doc;
  bad["evolution"]["domain"]["bogus"] = 1;
  CHECK(pointer(bad) == "/evolution/domain/bogus");
  bad = doc;
  bad["kind"] = "nonsense";
  CHECK(pointer(bad) == "/kind");
  bad = doc;
  bad["seed"] = -3;
  CHECK(pointer(bad) == "/seed");
  bad = doc;
  bad["trials"] = 4;
  CHECK(pointer(bad) == "/trials");
  bad = doc;
  bad["expect"]["trend"] = 1;
  CHECK(pointer(bad) == "/expect/trend");
  bad = doc;
  bad["evolution"]["operator"]["dimension"] = 2;
  CHECK(pointer(bad) != "<none>");
}

TEST_CASE("mean-value experiment") {
  const auto doc = toml(R"(kind = "mean-value"
methods = ["expanding-window", "exact", "cell-quadrature"]
field = {kind = "trig-polynomial", geometry = {kind = "periodic-torus", dimension = 1}, terms = [[[0], 1.5], [[2], 0.7, 0.3]]}
expect = {value = 1.5, tolerance = 1e-6}
)");
  const auto out = scratch("mean");
  const auto r = run_experiment(doc, {out});
  CHECK(r.pass());
  CHECK(r.criteria.size() == 9);
  CHECK(fs::exists(out / "mean_value.csv"));
  CHECK(fs::exists(out / "window_trace.csv"));
  for (const auto& a : r.artifacts) CHECK(fs::exists(out / a));
}

TEST_CASE("cell experiment: constant coefficients have a zero corrector") {
  const auto doc = toml(R"(kind = "cell"
xi = [[1.0, 0.0], [0.3, -0.2]]
operator = {dimension = 2, a = {kind = "constant", constant = 3.0, geometry = {kind = "periodic-torus", dimension = 2}}}
cell = {grid = 16}
expect = {corrector_norm = 1e-12, flux = [[3.0, 0.0], [0.9, -0.6]]}
)");
  const auto out = scratch("cell");
  const auto r = run_experiment(doc, {out});
  for (const auto& c : r.criteria) INFO(c.name << ": " << c.detail);
  CHECK(r.pass());
  const auto summary = r.summary.dump();
  CHECK(fs::exists(out / "cell.csv"));
}

TEST_CASE("cell experiment: 1D closed form matches the harmonic mean") {
  const auto doc = toml(R"(kind = "cell"
xi = [1.0]
closed_form = true
operator = {dimension = 1, a = {kind = "trig-polynomial", geometry = {kind = "periodic-torus", dimension = 1}, terms = [[[0], 2.0], [[1], 1.0, -1.5707963267948966]]}}
cell = {grid = 128}
expect = {flux = [1.7320508075688772], tolerance = 1e-3}
)");
  const auto r = run_experiment(doc, {scratch("cell1d")});
  for (const auto& c : r.criteria) INFO(c.name << ": " << c.detail);
  CHECK(r.pass());
}

TEST_CASE("effective experiment: closed-form laminate tensor") {
  auto doc = scenario_catalog()[1].config;
  REQUIRE(doc.at("kind") == "effective");
  doc["cell"]["grid"] = 32;
  doc["expect"]["tolerance"] = 5e-3;
  const auto r = run_experiment(doc, {scratch("effective")});
  for (const auto& c : r.criteria) INFO(c.name << ": " << c.detail);
  CHECK(r.pass());
  CHECK(find(r, "tensor") != nullptr);
}

TEST_CASE("minimize experiment: periodic quadratic density") {
  const auto doc = toml(R"(kind = "minimize"
eps_list = [0.25, 0.125, 0.0625]
load = 1.0
density = {dimension = 1, a = {kind = "trig-polynomial", geometry = {kind = "periodic-torus", dimension = 1}, terms = [[[0], 2.0], [[1], 1.0, -1.5707963267948966]]}}
domain = {cells = [256]}
)");
  const auto out = scratch("minimize");
  const auto r = run_experiment(doc, {out});
  for (const auto& c : r.criteria) INFO(c.name << ": " << c.detail);
  CHECK(r.pass());
  CHECK(slurp(out / "minimize.csv").rfind("eps,energy_eps,energy_hom,gap,l2_distance\n", 0) == 0);
}

TEST_CASE("sigma-check experiment: pure oscillation") {
  const auto doc = toml(R"(kind = "sigma-check"
seed = 3
domain = {lo = [0.0], hi = [1.0]}
sequence = {form = "pure", v = [{macro = [{k = [1.0]}], cell = {kind = "trig-polynomial", geometry = {kind = "periodic-torus", dimension = 1}, terms = [[[0], 1.0], [[1], 1.0]]}}]}
tests = [[{cell = {kind = "constant", constant = 1.0, geometry = {kind = "periodic-torus", dimension = 1}}}],
         [{macro = [{powers = [2]}], cell = {kind = "constant", constant = 1.0, geometry = {kind = "periodic-torus", dimension = 1}}}],
         [{macro = [{powers = [1]}], cell = {kind = "trig-polynomial", geometry = {kind = "periodic-torus", dimension = 1}, terms = [[[1], 1.0, -1.5707963267948966]]}}]]
checks = ["weak", "strong"]
)");
  const auto out = scratch("sigma");
  const auto r = run_experiment(doc, {out});
  for (const auto& c : r.criteria) INFO(c.name << ": " << c.detail);
  CHECK(r.pass());
  CHECK(r.criteria.size() == 2);
  CHECK(fs::exists(out / "sigma.csv"));
}

TEST_CASE("young experiment: smooth sequence has a Dirac measure") {
  const auto doc = toml(R"(kind = "young"
domain = {lo = [0.0], hi = [1.0]}
eps = 0.01
sequence = {form = "pure", v = [{macro = [{powers = [1]}], cell = {kind = "constant", constant = 1.0, geometry = {kind = "periodic-torus", dimension = 1}}}]}
dirac = [{macro = [{powers = [1]}], cell = {kind = "constant", constant = 1.0, geometry = {kind = "periodic-torus", dimension = 1}}}]
expect = {dirac = true}
)");
  const auto out = scratch("young");
  const auto r = run_experiment(doc, {out});
  for (const auto& c : r.criteria) INFO(c.name << ": " << c.detail);
  CHECK(r.pass());
  CHECK(find(r, "dirac") != nullptr);
  CHECK(fs::exists(out / "young.csv"));
}

TEST_CASE("deterministic study: errors decrease and reruns are byte identical") {
  const auto doc = toml(kSmallStudy);
  const auto a = scratch("study_a"), b = scratch("study_b");
  const auto r = run_experiment(doc, {a, std::nullopt, 1});
  for (const auto& c : r.criteria) INFO(c.name << ": " << c.detail);
  CHECK(r.pass());
  const auto& lv = r.summary.at("levels");
  REQUIRE(lv.size() == 3);
  CHECK(lv[1]["median"].get<double>() < lv[0]["median"].get<double>());
  CHECK(lv[2]["median"].get<double>() < lv[1]["median"].get<double>());
  run_experiment(doc, {b, std::nullopt, 3});
  for (const char* f : {"study.csv", "levels.csv", "study.json"}) CHECK(slurp(a / f) == slurp(b / f));
}

TEST_CASE("stochastic study depends on the seed only through the Wiener paths") {
  json doc = toml(kSmallStudy);
  doc["stochastic"] = true;
  doc["trials"] = 3;
  doc["evolution"]["noise"] = json::parse(R"([{"beta": {"kind": "constant", "constant": 0.5}, "profile": 1.0}])");
  doc["expect"] = json::object();
  const auto a = scratch("spde_a"), b = scratch("spde_b"), c = scratch("spde_c");
  const auto ra = run_experiment(doc, {a, 11, 1});
  run_experiment(doc, {b, 11, 2});
  run_experiment(doc, {c, 12, 1});
  CHECK(ra.seed == 11);
  CHECK(slurp(a / "study.csv") == slurp(b / "study.csv"));
  CHECK(slurp(a / "study.csv") != slurp(c / "study.csv"));
  CHECK(find(ra, "apriori_trend") != nullptr);
}
