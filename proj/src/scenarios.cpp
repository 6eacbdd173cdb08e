#include <mutex>

#include "homog/config.hpp"
#include "homog/error.hpp"
#include "homog/studies.hpp"

namespace homog::studies {

namespace {

constexpr const char* kPeriodicStudy = R"toml(kind = "study"
name = "periodic-1d-linear"
description = "Scalar heat flow with a(y) = 2 + sin(2 pi y) against the sqrt(3) homogenized flow"
seed = 1
eps_list = [0.125, 0.0625, 0.03125, 0.015625]

[evolution]
T = 0.1
eps = 0.125
initial = [{coefficient = 1.0, powers = [0], k = [0.5], phase = -1.5707963267948966}]
forcing = [1.0]

[evolution.domain]
lo = [0.0]
hi = [1.0]
cells = [512]

[evolution.operator]
mode = "scalar"
dimension = 1

[evolution.operator.a]
kind = "trig-polynomial"
geometry = {kind = "periodic-torus", dimension = 1}
terms = [[[0], 2.0], [[1], 1.0, -1.5707963267948966]]

[expect]
monotone = true
ratio = 4.0
)toml";

constexpr const char* kPeriodicCell = R"toml(kind = "effective"
name = "periodic-2d-laminate"
description = "Linear laminate a(y) = 2 + sin(2 pi y_0): effective tensor diag(sqrt(3), 2)"
model = "closed"

[operator]
mode = "scalar"
dimension = 2

[operator.a]
kind = "trig-polynomial"
geometry = {kind = "periodic-torus", dimension = 2}
terms = [[[0, 0], 2.0], [[1, 0], 1.0, -1.5707963267948966]]

[cell]
grid = 64

[expect]
tensor = [1.7320508075688772, 0.0, 0.0, 2.0]
tolerance = 1e-3
)toml";

constexpr const char* kPeriodicSpde = R"toml(kind = "study"
name = "periodic-1d-spde"
description = "Forced periodic heat flow from rest with linear multiplicative noise; median error over common Wiener paths"
seed = 7
stochastic = true
trials = 16
eps_list = [0.125, 0.0625, 0.03125]

[evolution]
T = 0.1
eps = 0.125
forcing = [1.0]

[evolution.domain]
cells = [256]

[evolution.operator]
dimension = 1

[evolution.operator.a]
kind = "trig-polynomial"
geometry = {kind = "periodic-torus", dimension = 1}
terms = [[[0], 2.0], [[1], 1.0, -1.5707963267948966]]

[[evolution.noise]]
beta = {kind = "constant", constant = 0.5}
profile = 1.0

[expect]
monotone = true
trend_tolerance = 0.05
)toml";

constexpr const char* kVectorFlow = R"toml(kind = "parabolic"
name = "periodic-2d-vector-flow"
description = "Incompressible flow with a(y) = 2 + sin(2 pi y_0), b = 1/2, p = 3 on the unit torus"
eps_list = [0.5, 0.25]
axes = [[-1.0, -0.5, 0.0, 0.5, 1.0], [-1.0, -0.5, 0.0, 0.5, 1.0], [-1.0, -0.5, 0.0, 0.5, 1.0], [-1.0, -0.5, 0.0, 0.5, 1.0]]

[cell]
grid = 32

[evolution]
mode = "vector"
T = 0.25
eps = 0.5
initial = [{coefficient = 0.02, powers = [0, 0], k = [1.0, 0.0], phase = -1.5707963267948966},
           {coefficient = 0.01, powers = [0, 0], k = [0.0, 1.0], phase = 0.0}]

[evolution.domain]
lo = [0.0, 0.0]
hi = [1.0, 1.0]
cells = [32, 32]

[evolution.operator]
mode = "vector"
dimension = 2
p = 3.0

[evolution.operator.a]
kind = "trig-polynomial"
geometry = {kind = "periodic-torus", dimension = 2}
terms = [[[0, 0], 2.0], [[1, 0], 1.0, -1.5707963267948966]]

[evolution.operator.b]
kind = "constant"
constant = 0.5
geometry = {kind = "periodic-torus", dimension = 2}

[expect]
monotone = true
max_divergence = 1e-8
)toml";

constexpr const char* kQuasiperiodic = R"toml(kind = "minimize"
name = "quasiperiodic-1d-minimize"
description = "Quadratic density with a(y) = 2 + cos(2 pi y)/2 + cos(2 sqrt(2) pi y)/2 (almost periodic)"
eps_list = [0.125, 0.0625, 0.03125, 0.015625]
load = 1.0

[density]
dimension = 1

[density.a]
kind = "trig-polynomial"
geometry = {kind = "quasiperiodic", dimension = 1, frequencies = [[1.0], [1.4142135623730951]]}
terms = [[[0, 0], 2.0], [[1, 0], 0.5], [[0, 1], 0.5]]

[domain]
cells = [1024]

[expect]
monotone = true
final_gap = 1e-2
distance = 5e-2
)toml";

constexpr const char* kSurrogate = R"toml(kind = "minimize"
name = "weakly-almost-periodic-surrogate"
description = "Surrogate for a weakly almost periodic coefficient: no finite generator exists, so a declared quasiperiodic module {1, sqrt(3), sqrt(5)} with geometrically decaying amplitudes stands in"
eps_list = [0.125, 0.0625, 0.03125, 0.015625]
load = 1.0

[density]
dimension = 1

[density.a]
kind = "trig-polynomial"
geometry = {kind = "quasiperiodic", dimension = 1, independent = true, frequencies = [[1.0], [1.7320508075688772], [2.23606797749979]]}
terms = [[[0, 0, 0], 2.0], [[1, 0, 0], 0.6], [[0, 1, 0], 0.3], [[0, 0, 1], 0.15]]

[domain]
cells = [1024]

[expect]
monotone = false
final_gap = 1e-2
distance = 5e-2
)toml";

constexpr const char* kSlowMinimize = R"toml(kind = "minimize"
name = "slow-oscillation-minimize"
description = "Non-ergodic algebra generated by cos(z^(1/3)): density (2 + cos|y|^(1/3)) |lambda|^2 / 2"
eps_list = [0.125, 0.0625, 0.03125, 0.015625]
load = 1.0

[density]
dimension = 1

[density.a]
kind = "slow-oscillation"
constant = 2.0
terms = [[1.0, [0.0]]]
geometry = {kind = "slow-oscillation", exponent = 0.3333333333333333, shifts = [0.0]}

[domain]
cells = [1024]

[expect]
monotone = true
final_gap = 1e-2
distance = 5e-2
)toml";

constexpr const char* kSlowMean = R"toml(kind = "mean-value"
name = "slow-oscillation-mean"
description = "Expanding-window mean of cos(z^(1/3)), which is 0"
methods = ["expanding-window"]

[field]
kind = "slow-oscillation"
terms = [[1.0, [0.0]]]
geometry = {kind = "slow-oscillation", exponent = 0.3333333333333333, shifts = [0.0]}

[expect]
value = 0.0
tolerance = 1e-3
)toml";

struct Source {
  const char* family;
  const char* text;
};

const Source kSources[] = {
    {"periodic", kPeriodicStudy},
    {"periodic", kPeriodicCell},
    {"periodic", kPeriodicSpde},
    {"periodic", kVectorFlow},
    {"quasiperiodic", kQuasiperiodic},
    {"weakly-almost-periodic surrogate", kSurrogate},
    {"non-ergodic", kSlowMinimize},
    {"non-ergodic", kSlowMean},
};

}  // namespace

const std::vector<Scenario>& scenario_catalog() {
  static const std::vector<Scenario> catalog = [] {
    std::vector<Scenario> out;
    for (const auto& s : kSources) {
      const auto doc = config::parse_toml(s.text, "<builtin>");
      out.push_back({doc.data.at("name").get<std::string>(), s.family,
                     doc.data.at("description").get<std::string>(), doc.data});
    }
    return out;
  }();
  return catalog;
}

const Scenario& find_scenario(const std::string& name) {
  for (const auto& s : scenario_catalog())
    if (s.name == name) return s;
  throw UsageError("unknown scenario '" + name + "' (see list-examples)");
}

}  // namespace homog::studies
