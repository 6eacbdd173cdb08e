#pragma once

// Experiment descriptors, the experiment runner behind the command-line tool,
// and the built-in scenario catalog. An experiment document is a JSON tree
// (usually loaded from TOML) with a `kind` key; parsing is strict and happens
// entirely before anything runs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "homog/correctors.hpp"
#include "homog/multiscale_solvers.hpp"
#include "homog/sigma_limits.hpp"

namespace homog::studies {

using json = nlohmann::json;

// --- descriptors --------------------------------------------------------------

correctors::MonotoneCellOperator operator_from_json(const json& doc, const std::string& path = "",
                                                    const std::filesystem::path& base_dir = ".");
json to_json(const correctors::MonotoneCellOperator& op);

correctors::ConvexDensity density_from_json(const json& doc, const std::string& path = "",
                                            const std::filesystem::path& base_dir = ".");
json to_json(const correctors::ConvexDensity& f);

solvers::Domain domain_from_json(const json& doc, const std::string& path = "");
json to_json(const solvers::Domain& d);

correctors::CellOptions cell_options_from_json(const json& doc, const std::string& path = "");
json to_json(const correctors::CellOptions& o);

discrete::NewtonOptions newton_from_json(const json& doc, const std::string& path = "");
json to_json(const discrete::NewtonOptions& o);

solvers::EvolutionConfig evolution_from_json(const json& doc, const std::string& path = "",
                                             const std::filesystem::path& base_dir = ".");
json to_json(const solvers::EvolutionConfig& cfg);

sigma::MacroDomain macro_domain_from_json(const json& doc, const std::string& path = "");
json to_json(const sigma::MacroDomain& d);

sigma::AmplitudeLaw law_from_json(const json& doc, const std::string& path = "");
json to_json(const sigma::AmplitudeLaw& law);

// --- experiments ----------------------------------------------------------------

struct RunContext {
  std::filesystem::path out = "out";
  std::optional<std::uint64_t> seed;  // overrides the document seed
  int threads = 1;
};

struct Criterion {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct RunResult {
  std::string kind;
  std::uint64_t seed = 0;
  std::vector<Criterion> criteria;
  std::vector<std::filesystem::path> artifacts;  // relative to RunContext::out
  json summary;

  bool pass() const;
};

struct Experiment {
  std::string kind;
  std::uint64_t seed = 1;
  json canonical;  // normalized document; parsing it again reproduces it
  std::function<RunResult(const RunContext&)> run;
};

const std::vector<std::string>& experiment_kinds();

/// Validates the whole document and returns a runnable experiment. Throws
/// ParseError (with a JSON pointer) or UsageError.
Experiment parse_experiment(const json& doc, const std::filesystem::path& base_dir = ".");

/// parse_experiment(doc).run(ctx).
RunResult run_experiment(const json& doc, const RunContext& ctx, const std::filesystem::path& base_dir = ".");

// --- scenario catalog -------------------------------------------------------------

struct Scenario {
  std::string name;
  std::string family;  // periodic, quasiperiodic, weakly-almost-periodic surrogate, non-ergodic
  std::string description;
  json config;
};

const std::vector<Scenario>& scenario_catalog();
/// Throws UsageError for unknown names.
const Scenario& find_scenario(const std::string& name);

}  // namespace homog::studies
