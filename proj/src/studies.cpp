#include "homog/studies.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "homog/error.hpp"
#include "homog/field_io.hpp"
#include "homog/json_util.hpp"
#include "homog/oscillator_fields.hpp"
#include "homog/parallel.hpp"
#include "homog/report_io.hpp"
#include "homog/wiener.hpp"
#include "homog/young_measures.hpp"

namespace homog::studies {

namespace ju = json_util;
using correctors::CellOptions;
using correctors::ConvexDensity;
using correctors::EffectiveModel;
using correctors::MonotoneCellOperator;
using fields::OscillatoryField;
using macro::MacroFunction;
using macro::SeparableField;
using report::CsvTable;
using solvers::EvolutionConfig;
using solvers::EvolutionMode;

namespace {

OscillatoryField field_at(const json& doc, const std::string& path, const char* key,
                          const std::filesystem::path& base_dir) {
  return fields::field_from_json(ju::at(doc, path, key), ju::child(path, key), base_dir);
}

json field_json(const OscillatoryField& f) { return fields::field_to_json(f); }

template <class F>
auto rethrow_as_parse(const std::string& path, F&& body) {
  try {
    return body();
  } catch (const ParseError&) {
    throw;
  } catch (const UsageError& e) {
    throw ParseError(e.what(), path);
  }
}

double positive(const json& doc, const std::string& path, const char* key, double fallback) {
  const double v = ju::get_or<double>(doc, path, key, fallback);
  if (!(v > 0)) throw ParseError(std::string("'") + key + "' must be positive", ju::child(path, key));
  return v;
}

std::vector<double> eps_ladder(const json& doc, const std::string& path, const char* key,
                               std::vector<double> fallback) {
  auto list = ju::get_or<std::vector<double>>(doc, path, key, std::move(fallback));
  if (list.empty()) throw ParseError("eps list must not be empty", ju::child(path, key));
  for (std::size_t k = 0; k < list.size(); ++k) {
    if (!(list[k] > 0)) throw ParseError("eps values must be positive", ju::child(ju::child(path, key), k));
    if (k > 0 && !(list[k] < list[k - 1]))
      throw ParseError("eps list must decrease strictly", ju::child(ju::child(path, key), k));
  }
  return list;
}

}  // namespace

// --- descriptors --------------------------------------------------------------

MonotoneCellOperator operator_from_json(const json& doc, const std::string& path,
                                        const std::filesystem::path& base_dir) {
  ju::require_keys(doc, path, {"mode", "dimension", "a", "b", "p", "nu0", "c1", "probe_points"});
  MonotoneCellOperator op;
  const auto mode = ju::get_or<std::string>(doc, path, "mode", "scalar");
  if (mode == "scalar")
    op.mode = correctors::Mode::Scalar;
  else if (mode == "vector")
    op.mode = correctors::Mode::Vector;
  else
    throw ParseError("mode must be 'scalar' or 'vector'", ju::child(path, "mode"));
  op.dimension = ju::get_or<int>(doc, path, "dimension", 1);
  if (doc.contains("a")) {
    const auto& a = doc.at("a");
    const auto ap = ju::child(path, "a");
    std::vector<OscillatoryField> parts;
    if (a.is_array()) {
      for (std::size_t i = 0; i < a.size(); ++i) parts.push_back(fields::field_from_json(a[i], ju::child(ap, i), base_dir));
    } else {
      parts.push_back(fields::field_from_json(a, ap, base_dir));
    }
    op.a = std::move(parts);
  }
  if (doc.contains("b")) op.b = field_at(doc, path, "b", base_dir);
  op.p = ju::get_or<double>(doc, path, "p", 3.0);
  op.nu0 = ju::get_or<double>(doc, path, "nu0", 0.0);
  op.c1 = ju::get_or<double>(doc, path, "c1", 0.0);
  op.probe_points = ju::get_or<int>(doc, path, "probe_points", 32);
  if (!op.a && !op.b) throw ParseError("operator needs 'a', 'b' or both", path);
  return op;
}

json to_json(const MonotoneCellOperator& op) {
  json doc;
  doc["mode"] = op.mode == correctors::Mode::Scalar ? "scalar" : "vector";
  doc["dimension"] = op.dimension;
  if (op.a) {
    if (op.a->size() == 1) {
      doc["a"] = field_json(op.a->front());
    } else {
      doc["a"] = json::array();
      for (const auto& f : *op.a) doc["a"].push_back(field_json(f));
    }
  }
  if (op.b) doc["b"] = field_json(*op.b);
  doc["p"] = op.p;
  doc["nu0"] = op.nu0;
  doc["c1"] = op.c1;
  doc["probe_points"] = op.probe_points;
  return doc;
}

ConvexDensity density_from_json(const json& doc, const std::string& path, const std::filesystem::path& base_dir) {
  ju::require_keys(doc, path, {"dimension", "weight", "a", "b", "p"});
  ConvexDensity f;
  f.dimension = ju::get_or<int>(doc, path, "dimension", 1);
  if (f.dimension < 1 || f.dimension > 2) throw ParseError("density dimension must be 1 or 2", ju::child(path, "dimension"));
  f.weight = doc.contains("weight") ? macro::macro_from_json(doc.at("weight"), f.dimension, ju::child(path, "weight"))
                                    : MacroFunction::constant(f.dimension, 1.0);
  if (doc.contains("a")) f.a = field_at(doc, path, "a", base_dir);
  if (doc.contains("b")) f.b = field_at(doc, path, "b", base_dir);
  f.p = ju::get_or<double>(doc, path, "p", 2.0);
  if (!f.a && !f.b) throw ParseError("density needs 'a', 'b' or both", path);
  return f;
}

json to_json(const ConvexDensity& f) {
  json doc;
  doc["dimension"] = f.dimension;
  doc["weight"] = macro::to_json(f.weight);
  if (f.a) doc["a"] = field_json(*f.a);
  if (f.b) doc["b"] = field_json(*f.b);
  doc["p"] = f.p;
  return doc;
}

solvers::Domain domain_from_json(const json& doc, const std::string& path) {
  ju::require_keys(doc, path, {"lo", "hi", "cells"});
  solvers::Domain d;
  d.lo = ju::get_or<std::vector<double>>(doc, path, "lo", {0.0});
  d.hi = ju::get_or<std::vector<double>>(doc, path, "hi", std::vector<double>(d.lo.size(), 1.0));
  d.cells = ju::get_or<std::vector<int>>(doc, path, "cells", std::vector<int>(d.lo.size(), 64));
  rethrow_as_parse(path, [&] {
    d.validate();
    return 0;
  });
  return d;
}

json to_json(const solvers::Domain& d) { return {{"lo", d.lo}, {"hi", d.hi}, {"cells", d.cells}}; }

CellOptions cell_options_from_json(const json& doc, const std::string& path) {
  ju::require_keys(doc, path, {"grid", "tolerance", "tau_points", "initial_perturbation", "newton"});
  CellOptions o;
  o.grid = ju::get_or<int>(doc, path, "grid", o.grid);
  o.tolerance = positive(doc, path, "tolerance", o.tolerance);
  o.tau_points = ju::get_or<int>(doc, path, "tau_points", o.tau_points);
  o.initial_perturbation = ju::get_or<double>(doc, path, "initial_perturbation", 0.0);
  if (doc.contains("newton")) o.newton = newton_from_json(doc.at("newton"), ju::child(path, "newton"));
  if (o.grid < 16) throw ParseError("cell grid must be at least 16", ju::child(path, "grid"));
  if (o.tau_points < 1) throw ParseError("tau_points must be positive", ju::child(path, "tau_points"));
  return o;
}

json to_json(const CellOptions& o) {
  return {{"grid", o.grid},
          {"tolerance", o.tolerance},
          {"tau_points", o.tau_points},
          {"initial_perturbation", o.initial_perturbation},
          {"newton", to_json(o.newton)}};
}

discrete::NewtonOptions newton_from_json(const json& doc, const std::string& path) {
  ju::require_keys(doc, path, {"tolerance", "max_iterations", "delta", "armijo", "step_floor"});
  discrete::NewtonOptions o;
  o.tolerance = positive(doc, path, "tolerance", o.tolerance);
  o.max_iterations = ju::get_or<int>(doc, path, "max_iterations", o.max_iterations);
  o.delta = ju::get_or<double>(doc, path, "delta", o.delta);
  o.armijo = positive(doc, path, "armijo", o.armijo);
  o.step_floor = positive(doc, path, "step_floor", o.step_floor);
  if (o.max_iterations < 1) throw ParseError("max_iterations must be positive", ju::child(path, "max_iterations"));
  return o;
}

json to_json(const discrete::NewtonOptions& o) {
  return {{"tolerance", o.tolerance},
          {"max_iterations", o.max_iterations},
          {"delta", o.delta},
          {"armijo", o.armijo},
          {"step_floor", o.step_floor}};
}

EvolutionConfig evolution_from_json(const json& doc, const std::string& path, const std::filesystem::path& base_dir) {
  ju::require_keys(doc, path, {"mode", "domain", "T", "dt", "eps", "eps_time", "operator", "initial", "forcing",
                               "noise", "newton", "blowup_cap", "convection", "check_resolution"});
  EvolutionConfig cfg;
  const auto mode = ju::get_or<std::string>(doc, path, "mode", "scalar");
  if (mode == "scalar")
    cfg.mode = EvolutionMode::Scalar;
  else if (mode == "vector")
    cfg.mode = EvolutionMode::Vector;
  else
    throw ParseError("mode must be 'scalar' or 'vector'", ju::child(path, "mode"));
  cfg.domain = domain_from_json(ju::at(doc, path, "domain"), ju::child(path, "domain"));
  const int d = cfg.domain.dimension();
  cfg.T = positive(doc, path, "T", cfg.T);
  cfg.dt = ju::get_or<double>(doc, path, "dt", 0.0);
  if (cfg.dt < 0) throw ParseError("dt must be non-negative (0 selects eps_time/4)", ju::child(path, "dt"));
  cfg.eps = positive(doc, path, "eps", cfg.eps);
  if (doc.contains("eps_time")) cfg.eps_time = positive(doc, path, "eps_time", 1.0);
  cfg.op = operator_from_json(ju::at(doc, path, "operator"), ju::child(path, "operator"), base_dir);
  const bool vector_op = cfg.op.mode == correctors::Mode::Vector;
  if (vector_op != (cfg.mode == EvolutionMode::Vector))
    throw ParseError("operator mode differs from the evolution mode", ju::child(ju::child(path, "operator"), "mode"));
  if (cfg.op.dimension != d)
    throw ParseError("operator dimension differs from the domain", ju::child(ju::child(path, "operator"), "dimension"));
  cfg.initial = doc.contains("initial") ? macro::macro_from_json(doc.at("initial"), d, ju::child(path, "initial"))
                                        : MacroFunction::constant(d, 0.0);
  if (doc.contains("forcing")) {
    const auto& f = doc.at("forcing");
    const auto fp = ju::child(path, "forcing");
    if (!f.is_array()) throw ParseError("forcing must be a list of macro functions (one per component)", fp);
    for (std::size_t i = 0; i < f.size(); ++i) cfg.forcing.push_back(macro::macro_from_json(f[i], d + 1, ju::child(fp, i)));
    const std::size_t want = cfg.mode == EvolutionMode::Scalar ? 1 : 2;
    if (!cfg.forcing.empty() && cfg.forcing.size() != want)
      throw ParseError("forcing needs " + std::to_string(want) + " component(s)", fp);
  }
  if (doc.contains("noise")) {
    const auto& n = doc.at("noise");
    const auto np = ju::child(path, "noise");
    if (!n.is_array()) throw ParseError("noise must be a list of modes", np);
    for (std::size_t i = 0; i < n.size(); ++i) {
      const auto mp = ju::child(np, i);
      ju::require_keys(n[i], mp, {"alpha", "beta", "profile"});
      solvers::NoiseSpec::Mode m;
      if (n[i].contains("alpha")) m.alpha = field_at(n[i], mp, "alpha", base_dir);
      if (n[i].contains("beta")) m.beta = field_at(n[i], mp, "beta", base_dir);
      m.profile = n[i].contains("profile") ? macro::macro_from_json(n[i].at("profile"), d, ju::child(mp, "profile"))
                                           : MacroFunction::constant(d, 1.0);
      cfg.noise.modes.push_back(std::move(m));
    }
  }
  if (doc.contains("newton")) cfg.newton = newton_from_json(doc.at("newton"), ju::child(path, "newton"));
  cfg.blowup_cap = positive(doc, path, "blowup_cap", cfg.blowup_cap);
  cfg.convection = ju::get_or<bool>(doc, path, "convection", true);
  cfg.check_resolution = ju::get_or<bool>(doc, path, "check_resolution", true);
  rethrow_as_parse(path, [&] {
    cfg.op.validate();
    return cfg.steps();
  });
  return cfg;
}

json to_json(const EvolutionConfig& cfg) {
  json doc;
  doc["mode"] = solvers::to_string(cfg.mode);
  doc["domain"] = to_json(cfg.domain);
  doc["T"] = cfg.T;
  doc["dt"] = cfg.dt;
  doc["eps"] = cfg.eps;
  if (cfg.eps_time) doc["eps_time"] = *cfg.eps_time;
  doc["operator"] = to_json(cfg.op);
  doc["initial"] = macro::to_json(cfg.initial);
  doc["forcing"] = json::array();
  for (const auto& f : cfg.forcing) doc["forcing"].push_back(macro::to_json(f));
  doc["noise"] = json::array();
  for (const auto& m : cfg.noise.modes) {
    json mode;
    if (m.alpha) mode["alpha"] = field_json(*m.alpha);
    if (m.beta) mode["beta"] = field_json(*m.beta);
    mode["profile"] = macro::to_json(m.profile);
    doc["noise"].push_back(mode);
  }
  doc["newton"] = to_json(cfg.newton);
  doc["blowup_cap"] = cfg.blowup_cap;
  doc["convection"] = cfg.convection;
  doc["check_resolution"] = cfg.check_resolution;
  return doc;
}

sigma::MacroDomain macro_domain_from_json(const json& doc, const std::string& path) {
  ju::require_keys(doc, path, {"lo", "hi", "horizon"});
  sigma::MacroDomain d;
  d.lo = ju::get_or<std::vector<double>>(doc, path, "lo", {0.0});
  d.hi = ju::get_or<std::vector<double>>(doc, path, "hi", std::vector<double>(d.lo.size(), 1.0));
  if (doc.contains("horizon")) d.horizon = positive(doc, path, "horizon", 1.0);
  rethrow_as_parse(path, [&] {
    d.validate();
    return 0;
  });
  return d;
}

json to_json(const sigma::MacroDomain& d) {
  json doc = {{"lo", d.lo}, {"hi", d.hi}};
  if (d.horizon) doc["horizon"] = *d.horizon;
  return doc;
}

sigma::AmplitudeLaw law_from_json(const json& doc, const std::string& path) {
  ju::require_keys(doc, path, {"kind", "a", "b"});
  sigma::AmplitudeLaw law;
  const auto kind = ju::get_or<std::string>(doc, path, "kind", "fixed");
  if (kind == "fixed")
    law.kind = sigma::AmplitudeLaw::Kind::Fixed;
  else if (kind == "uniform")
    law.kind = sigma::AmplitudeLaw::Kind::Uniform;
  else if (kind == "normal")
    law.kind = sigma::AmplitudeLaw::Kind::Normal;
  else
    throw ParseError("law kind must be fixed, uniform or normal", ju::child(path, "kind"));
  law.a = ju::get_or<double>(doc, path, "a", 1.0);
  law.b = ju::get_or<double>(doc, path, "b", 1.0);
  return law;
}

json to_json(const sigma::AmplitudeLaw& law) {
  static const char* names[] = {"fixed", "uniform", "normal"};
  return {{"kind", names[static_cast<int>(law.kind)]}, {"a", law.a}, {"b", law.b}};
}

// --- experiments ----------------------------------------------------------------

bool RunResult::pass() const {
  return std::all_of(criteria.begin(), criteria.end(), [](const Criterion& c) { return c.pass; });
}

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"mean-value", "sigma-check", "young",  "cell", "effective",
                                              "minimize",   "parabolic",   "spde", "study"};
  return kinds;
}

namespace {

std::string fmt(double v) { return report::format_short(v); }

class Output {
 public:
  Output(const RunContext& ctx, RunResult& res) : ctx_(ctx), res_(res) {
    std::filesystem::create_directories(ctx.out);
  }
  void csv(const std::string& name, const CsvTable& t) {
    report::write_csv(ctx_.out / name, t);
    res_.artifacts.emplace_back(name);
  }
  void json_file(const std::string& name, const json& doc) {
    report::write_json(ctx_.out / name, doc);
    res_.artifacts.emplace_back(name);
  }
  void record(const std::string& name) { res_.artifacts.emplace_back(name); }
  const std::filesystem::path& dir() const { return ctx_.out; }
  void criterion(std::string name, bool pass, std::string detail) {
    res_.criteria.push_back({std::move(name), pass, std::move(detail)});
  }

 private:
  const RunContext& ctx_;
  RunResult& res_;
};

struct Common {
  std::string kind;
  std::uint64_t seed = 1;
  json canonical;
};

// Keys shared by every experiment kind.
#define HOMOG_COMMON_KEYS "kind", "name", "description", "seed", "expect"

Common common(const json& doc) {
  Common c;
  c.kind = ju::string(ju::at(doc, "", "kind"), "/kind");
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end())
    throw ParseError("unknown experiment kind '" + c.kind + "'", "/kind");
  if (doc.contains("seed")) {
    const auto& s = doc.at("seed");
    if (!s.is_number_integer() || (s.is_number_integer() && s.get<std::int64_t>() < 0 && !s.is_number_unsigned()))
      throw ParseError("seed must be a non-negative integer", "/seed");
    c.seed = s.get<std::uint64_t>();
  }
  c.canonical["kind"] = c.kind;
  c.canonical["seed"] = c.seed;
  for (const char* k : {"name", "description"})
    if (doc.contains(k)) c.canonical[k] = ju::string(doc.at(k), std::string("/") + k);
  return c;
}

json expect_of(const json& doc, std::initializer_list<const char*> allowed) {
  if (!doc.contains("expect")) return json::object();
  ju::require_keys(doc.at("expect"), "/expect", allowed);
  return doc.at("expect");
}

// --- mean-value -------------------------------------------------------------

Experiment parse_mean_value(const json& doc, Common c, const std::filesystem::path& base_dir) {
  ju::require_keys(doc, "", {HOMOG_COMMON_KEYS, "field", "methods", "window"});
  const auto field = field_at(doc, "", "field", base_dir);
  std::vector<fields::MeanMethod> methods;
  if (doc.contains("methods")) {
    const auto& m = doc.at("methods");
    if (!m.is_array() || m.empty()) throw ParseError("methods must be a non-empty list", "/methods");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const auto p = ju::child("/methods", i);
      methods.push_back(rethrow_as_parse(p, [&] { return fields::mean_method_from_string(ju::string(m[i], p)); }));
    }
  } else {
    methods.push_back(fields::MeanMethod::ExpandingWindow);
  }
  fields::MeanParams params;
  if (doc.contains("window")) {
    const auto& w = doc.at("window");
    ju::require_keys(w, "/window", {"r0", "levels", "points_per_wavelength", "max_points"});
    params.window.r0 = ju::get_or<double>(w, "/window", "r0", 0.0);
    params.window.levels = ju::get_or<int>(w, "/window", "levels", -1);
    params.window.points_per_wavelength = positive(w, "/window", "points_per_wavelength", 8.0);
    params.window.max_points = positive(w, "/window", "max_points", 4e8);
  }
  const json expect = expect_of(doc, {"value", "tolerance"});
  const auto expected = expect.contains("value") ? std::optional<double>(ju::number(expect.at("value"), "/expect/value"))
                                                 : std::nullopt;
  const double tolerance = ju::get_or<double>(expect, "/expect", "tolerance", 1e-3);

  c.canonical["field"] = field_json(field);
  c.canonical["methods"] = json::array();
  for (auto m : methods) c.canonical["methods"].push_back(fields::to_string(m));
  c.canonical["window"] = {{"r0", params.window.r0},
                           {"levels", params.window.levels},
                           {"points_per_wavelength", params.window.points_per_wavelength},
                           {"max_points", params.window.max_points}};
  c.canonical["expect"] = expect;

  Experiment e{c.kind, c.seed, c.canonical, {}};
  e.run = [=](const RunContext& ctx) {
    RunResult res;
    Output out(ctx, res);
    std::vector<fields::MeanValueEstimate> est;
    for (auto m : methods) est.push_back(fields::mean_value(field, m, params));
    CsvTable table({"method", "value", "error", "divergent"});
    CsvTable trace({"method", "radius", "window_value"});
    json summary = json::array();
    for (const auto& v : est) {
      const auto name = fields::to_string(v.method);
      table.add({name, v.value, v.error, v.divergent ? 1 : 0});
      for (std::size_t k = 0; k < v.radii.size(); ++k) trace.add({name, v.radii[k], v.window_values[k]});
      summary.push_back({{"method", name},
                         {"value", v.value},
                         {"error", v.error},
                         {"divergent", v.divergent},
                         {"radii", v.radii},
                         {"window_values", v.window_values}});
      out.criterion("converged:" + name, !v.divergent && std::isfinite(v.value),
                    "value " + fmt(v.value) + ", error " + fmt(v.error));
    }
    for (std::size_t i = 0; i < est.size(); ++i)
      for (std::size_t j = i + 1; j < est.size(); ++j) {
        const double gap = std::abs(est[i].value - est[j].value);
        const double bound = std::max(est[i].error, est[j].error) + 1e-12;
        out.criterion("agreement:" + fields::to_string(est[i].method) + "-" + fields::to_string(est[j].method),
                      gap <= bound, "gap " + fmt(gap) + " <= " + fmt(bound));
      }
    if (expected)
      for (const auto& v : est) {
        const double gap = std::abs(v.value - *expected);
        out.criterion("expected:" + fields::to_string(v.method), gap <= tolerance,
                      "|" + fmt(v.value) + " - " + fmt(*expected) + "| <= " + fmt(tolerance));
      }
    out.csv("mean_value.csv", table);
    out.csv("window_trace.csv", trace);
    res.summary = {{"estimates", summary}};
    out.json_file("mean_value.json", res.summary);
    return res;
  };
  return e;
}

// --- sigma-check ------------------------------------------------------------

struct SequenceSpec {
  bool pure = true;
  SeparableField v, u0, u1;
  sigma::AmplitudeLaw law;
  bool random_corrector = false;
};

SequenceSpec sequence_from_json(const json& doc, const std::string& path, int dim) {
  ju::require_keys(doc, path, {"form", "v", "u0", "u1", "law", "random_corrector"});
  SequenceSpec s;
  const auto form = ju::get_or<std::string>(doc, path, "form", "pure");
  if (form != "pure" && form != "two-scale")
    throw ParseError("form must be 'pure' or 'two-scale'", ju::child(path, "form"));
  s.pure = form == "pure";
  if (s.pure) {
    s.v = macro::separable_from_json(ju::at(doc, path, "v"), dim, ju::child(path, "v"));
    for (const char* k : {"u0", "u1", "law", "random_corrector"})
      if (doc.contains(k)) throw ParseError("key only valid for two-scale sequences", ju::child(path, k));
  } else {
    s.u0 = macro::separable_from_json(ju::at(doc, path, "u0"), dim, ju::child(path, "u0"));
    if (doc.contains("u1")) s.u1 = macro::separable_from_json(doc.at("u1"), dim, ju::child(path, "u1"));
    if (doc.contains("law")) s.law = law_from_json(doc.at("law"), ju::child(path, "law"));
    s.random_corrector = ju::get_or<bool>(doc, path, "random_corrector", false);
    if (doc.contains("v")) throw ParseError("key only valid for pure sequences", ju::child(path, "v"));
  }
  return s;
}

json sequence_json(const SequenceSpec& s) {
  if (s.pure) return {{"form", "pure"}, {"v", macro::to_json(s.v)}};
  json doc = {{"form", "two-scale"}, {"u0", macro::to_json(s.u0)}, {"law", to_json(s.law)},
              {"random_corrector", s.random_corrector}};
  if (!s.u1.empty()) doc["u1"] = macro::to_json(s.u1);
  return doc;
}

sigma::OscillatorySequence make_sequence(const sigma::MacroDomain& Q, const SequenceSpec& s) {
  if (s.pure) return sigma::OscillatorySequence::pure_oscillation(Q, s.v);
  return sigma::OscillatorySequence::two_scale_expansion(Q, s.u0, s.u1, s.law, s.random_corrector);
}

sigma::TwoScaleFunction make_limit(const sigma::MacroDomain& Q, const SequenceSpec& s) {
  return s.pure ? sigma::TwoScaleFunction(Q, s.v) : sigma::TwoScaleFunction(Q, s.u0);
}

sigma::CheckOptions check_options_from_json(const json& doc, const std::string& path) {
  ju::require_keys(doc, path, {"epsilons", "tolerance", "points_per_period", "max_points", "mc_samples", "noise_floor"});
  sigma::CheckOptions o;
  o.epsilons = eps_ladder(doc, path, "epsilons", o.epsilons);
  o.tolerance = positive(doc, path, "tolerance", o.tolerance);
  o.points_per_period = ju::get_or<int>(doc, path, "points_per_period", o.points_per_period);
  o.max_points = positive(doc, path, "max_points", o.max_points);
  o.mc_samples = ju::get_or<std::size_t>(doc, path, "mc_samples", o.mc_samples);
  o.noise_floor = positive(doc, path, "noise_floor", o.noise_floor);
  return o;
}

json check_options_json(const sigma::CheckOptions& o) {
  return {{"epsilons", o.epsilons},         {"tolerance", o.tolerance},   {"points_per_period", o.points_per_period},
          {"max_points", o.max_points},     {"mc_samples", o.mc_samples}, {"noise_floor", o.noise_floor}};
}

Experiment parse_sigma(const json& doc, Common c) {
  ju::require_keys(doc, "", {HOMOG_COMMON_KEYS, "domain", "sequence", "tests", "checks", "p", "options"});
  expect_of(doc, {});
  const auto Q = macro_domain_from_json(ju::at(doc, "", "domain"), "/domain");
  const int dim = Q.macro_dimension();
  const auto seq = sequence_from_json(ju::at(doc, "", "sequence"), "/sequence", dim);
  std::vector<SeparableField> tests;
  const auto& t = ju::at(doc, "", "tests");
  if (!t.is_array() || t.empty()) throw ParseError("tests must be a non-empty list of separable fields", "/tests");
  for (std::size_t i = 0; i < t.size(); ++i) tests.push_back(macro::separable_from_json(t[i], dim, ju::child("/tests", i)));
  std::vector<std::string> checks = {"weak"};
  if (doc.contains("checks")) {
    checks.clear();
    const auto& ch = doc.at("checks");
    if (!ch.is_array() || ch.empty()) throw ParseError("checks must be a non-empty list", "/checks");
    for (std::size_t i = 0; i < ch.size(); ++i) {
      const auto p = ju::child("/checks", i);
      const auto name = ju::string(ch[i], p);
      if (name != "weak" && name != "strong" && name != "gradient")
        throw ParseError("check must be weak, strong or gradient", p);
      if (name == "gradient" && seq.pure) throw ParseError("gradient check needs a two-scale sequence", p);
      checks.push_back(name);
    }
  }
  const double p = ju::get_or<double>(doc, "", "p", 2.0);
  if (!(p >= 1)) throw ParseError("p must be at least 1", "/p");
  auto opts = doc.contains("options") ? check_options_from_json(doc.at("options"), "/options") : sigma::CheckOptions{};
  opts.seed = c.seed;

  c.canonical["domain"] = to_json(Q);
  c.canonical["sequence"] = sequence_json(seq);
  c.canonical["tests"] = json::array();
  for (const auto& f : tests) c.canonical["tests"].push_back(macro::to_json(f));
  c.canonical["checks"] = checks;
  c.canonical["p"] = p;
  c.canonical["options"] = check_options_json(opts);
  c.canonical["expect"] = json::object();

  Experiment e{c.kind, c.seed, c.canonical, {}};
  e.run = [=](const RunContext& ctx) mutable {
    RunResult res;
    Output out(ctx, res);
    opts.seed = ctx.seed.value_or(opts.seed);
    opts.threads = ctx.threads;
    const auto sequence = make_sequence(Q, seq);
    const auto limit = make_limit(Q, seq);
    CsvTable table({"check", "report", "eps", "value", "limit", "error"});
    json summary = json::array();
    for (const auto& name : checks) {
      sigma::SigmaCheck check;
      if (name == "weak")
        check = sigma::check_weak_sigma(sequence, limit, tests, opts);
      else if (name == "strong")
        check = sigma::check_strong_sigma(sequence, limit, p, tests, opts);
      else
        check = sigma::check_gradient_decomposition(sigma::TwoScaleFunction(Q, seq.u0, seq.u1), tests, opts, seq.law,
                                                    seq.random_corrector);
      json reports = json::array();
      double worst = 0.0;
      for (std::size_t r = 0; r < check.reports.size(); ++r) {
        const auto& rep = check.reports[r];
        for (std::size_t k = 0; k < rep.epsilons.size(); ++k)
          table.add({name, r, rep.epsilons[k], rep.values[k], rep.limit, rep.errors[k]});
        if (!rep.errors.empty()) worst = std::max(worst, rep.errors.back());
        reports.push_back({{"label", rep.label},
                           {"limit", rep.limit},
                           {"final_error", rep.errors.empty() ? 0.0 : rep.errors.back()},
                           {"rate", std::isfinite(rep.rate) ? json(rep.rate) : json(nullptr)},
                           {"tolerance", rep.tolerance},
                           {"mc_sigma", rep.mc_sigma},
                           {"pass", rep.pass}});
      }
      summary.push_back({{"check", name}, {"pass", check.pass}, {"reports", reports}});
      out.criterion(name, check.pass,
                    std::to_string(check.reports.size()) + " reports, worst final error " + fmt(worst));
    }
    out.csv("sigma.csv", table);
    res.summary = {{"checks", summary}};
    out.json_file("sigma.json", res.summary);
    return res;
  };
  return e;
}

// --- young ------------------------------------------------------------------

Experiment parse_young(const json& doc, Common c) {
  ju::require_keys(doc, "", {HOMOG_COMMON_KEYS, "domain", "sequence", "eps", "bins", "dirac"});
  const auto Q = macro_domain_from_json(ju::at(doc, "", "domain"), "/domain");
  if (Q.spatial_dimension() != 1 || Q.horizon) throw ParseError("Young measures need a 1D domain without time", "/domain");
  const auto seq = sequence_from_json(ju::at(doc, "", "sequence"), "/sequence", 1);
  const double eps = positive(doc, "", "eps", 0.01);
  young::Bins bins;
  if (doc.contains("bins")) {
    const auto& b = doc.at("bins");
    ju::require_keys(b, "/bins", {"nx", "ns", "nl", "min_samples", "pad", "box"});
    bins.nx = ju::get_or<int>(b, "/bins", "nx", bins.nx);
    bins.ns = ju::get_or<int>(b, "/bins", "ns", bins.ns);
    bins.nl = ju::get_or<int>(b, "/bins", "nl", bins.nl);
    bins.min_samples = ju::get_or<int>(b, "/bins", "min_samples", bins.min_samples);
    bins.pad = ju::get_or<double>(b, "/bins", "pad", bins.pad);
    if (b.contains("box")) {
      const auto box = ju::numbers(b.at("box"), "/bins/box");
      if (box.size() != 2 || !(box[0] < box[1])) throw ParseError("box must be [lo, hi] with lo < hi", "/bins/box");
      bins.box = std::make_pair(box[0], box[1]);
    }
  }
  std::optional<SeparableField> dirac;
  if (doc.contains("dirac")) dirac = macro::separable_from_json(doc.at("dirac"), 1, "/dirac");
  const json expect = expect_of(doc, {"barycenter_tolerance", "dirac"});
  const double bary_tol = ju::get_or<double>(expect, "/expect", "barycenter_tolerance", 1e-3);
  const auto want_dirac = expect.contains("dirac") ? std::optional<bool>(ju::boolean(expect.at("dirac"), "/expect/dirac"))
                                                   : std::nullopt;

  c.canonical["domain"] = to_json(Q);
  c.canonical["sequence"] = sequence_json(seq);
  c.canonical["eps"] = eps;
  c.canonical["bins"] = {{"nx", bins.nx}, {"ns", bins.ns}, {"nl", bins.nl}, {"min_samples", bins.min_samples},
                         {"pad", bins.pad}};
  if (bins.box) c.canonical["bins"]["box"] = {bins.box->first, bins.box->second};
  if (dirac) c.canonical["dirac"] = macro::to_json(*dirac);
  c.canonical["expect"] = expect;

  Experiment e{c.kind, c.seed, c.canonical, {}};
  e.run = [=](const RunContext& ctx) mutable {
    RunResult res;
    Output out(ctx, res);
    bins.threads = ctx.threads;
    const auto sequence = make_sequence(Q, seq);
    const auto nu = young::estimate_young_measure(sequence, eps, bins);
    const auto limit = make_limit(Q, seq);
    const double deviation = young::barycenter_deviation(nu, limit);
    const double bound = nu.lambda_width() + bary_tol;
    out.criterion("sampled", !nu.starved(), "every (x, s) cell has at least " + std::to_string(nu.min_samples()) + " samples");
    out.criterion("barycenter", deviation <= bound, "deviation " + fmt(deviation) + " <= " + fmt(bound));
    json summary = young::summary_json(nu);
    summary["barycenter_deviation"] = deviation;
    if (dirac) {
      const auto target = sigma::TwoScaleFunction(Q, *dirac);
      const auto d = young::dirac_test(nu, sequence, target, 0.0);
      summary["dirac"] = {{"is_dirac", d.is_dirac},
                          {"l1_distance", d.l1_distance},
                          {"resolution", d.resolution},
                          {"direct_l1", d.direct_l1}};
      if (want_dirac)
        out.criterion("dirac", d.is_dirac == *want_dirac,
                      "distance " + fmt(d.l1_distance) + ", resolution " + fmt(d.resolution));
    }
    report::write_text(out.dir() / "young.csv", young::to_csv(nu));
    out.record("young.csv");
    res.summary = summary;
    out.json_file("young.json", summary);
    return res;
  };
  return e;
}

// --- cell and effective -----------------------------------------------------

std::vector<std::vector<double>> xi_list(const json& doc, const std::string& path, int r) {
  std::vector<std::vector<double>> out;
  if (!doc.is_array() || doc.empty()) throw ParseError("xi must be a vector or a list of vectors", path);
  if (doc[0].is_number()) {
    out.push_back(ju::numbers(doc, path));
  } else {
    for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(ju::numbers(doc[i], ju::child(path, i)));
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    if (static_cast<int>(out[i].size()) != r)
      throw ParseError("xi needs " + std::to_string(r) + " components", ju::child(path, i));
  return out;
}

double rms(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

Experiment parse_cell(const json& doc, Common c, const std::filesystem::path& base_dir) {
  ju::require_keys(doc, "", {HOMOG_COMMON_KEYS, "operator", "xi", "cell", "closed_form"});
  const auto op = operator_from_json(ju::at(doc, "", "operator"), "/operator", base_dir);
  rethrow_as_parse("/operator", [&] {
    op.validate();
    return 0;
  });
  const auto xis = xi_list(ju::at(doc, "", "xi"), "/xi", op.components());
  const auto opts = doc.contains("cell") ? cell_options_from_json(doc.at("cell"), "/cell") : CellOptions{};
  const bool closed_form = ju::get_or<bool>(doc, "", "closed_form", false);
  if (closed_form && (op.mode != correctors::Mode::Scalar || op.dimension != 1))
    throw ParseError("the closed-form oracle needs a 1D scalar operator", "/closed_form");
  const json expect = expect_of(doc, {"flux", "tolerance", "residual", "corrector_norm"});
  const double tolerance = ju::get_or<double>(expect, "/expect", "tolerance", 1e-5);
  const double residual_cap = ju::get_or<double>(expect, "/expect", "residual", 1e-8);
  std::optional<std::vector<std::vector<double>>> flux;
  if (expect.contains("flux")) {
    flux = xi_list(expect.at("flux"), "/expect/flux", op.components());
    if (flux->size() != xis.size()) throw ParseError("one expected flux per xi", "/expect/flux");
  }
  const auto corrector_cap = expect.contains("corrector_norm")
                                 ? std::optional<double>(ju::number(expect.at("corrector_norm"), "/expect/corrector_norm"))
                                 : std::nullopt;

  c.canonical["operator"] = to_json(op);
  c.canonical["xi"] = xis;
  c.canonical["cell"] = to_json(opts);
  c.canonical["closed_form"] = closed_form;
  c.canonical["expect"] = expect;

  Experiment e{c.kind, c.seed, c.canonical, {}};
  e.run = [=](const RunContext& ctx) {
    RunResult res;
    Output out(ctx, res);
    const int r = op.components();
    std::vector<std::string> cols{"index"};
    for (const char* pre : {"xi_", "flux_", "m_", "M_"})
      for (int i = 0; i < r; ++i) cols.push_back(pre + std::to_string(i));
    for (const char* col : {"energy", "corrector_norm", "residual", "iterations"}) cols.push_back(col);
    if (closed_form) cols.push_back("closed_form_flux");
    CsvTable table(cols);
    std::vector<correctors::CellSolution> sols(xis.size());
    parallel_for(xis.size(), ctx.threads, [&](std::size_t k) { sols[k] = correctors::solve_cell_problem(op, xis[k], opts); });
    json entries = json::array();
    double worst_residual = 0, worst_norm = 0, worst_flux = 0, worst_cf = 0;
    for (std::size_t k = 0; k < xis.size(); ++k) {
      const auto& s = sols[k];
      double norm = 0;
      for (const auto& sl : s.slices) norm = std::max(norm, rms(sl.corrector));
      worst_residual = std::max(worst_residual, s.residual);
      worst_norm = std::max(worst_norm, norm);
      std::vector<report::CsvTable::Cell> row{k};
      for (double v : s.xi) row.emplace_back(v);
      for (double v : s.flux) row.emplace_back(v);
      for (double v : s.m_xi) row.emplace_back(v);
      for (double v : s.M_xi) row.emplace_back(v);
      row.emplace_back(s.energy);
      row.emplace_back(norm);
      row.emplace_back(s.residual);
      row.emplace_back(s.iterations);
      if (closed_form) {
        const auto cf = correctors::solve_cell_1d_closed_form(op, xis[k][0], std::max(256, opts.grid), opts.tau_points);
        worst_cf = std::max(worst_cf, std::abs(cf.flux[0] - s.flux[0]));
        row.emplace_back(cf.flux[0]);
      }
      if (flux)
        for (int i = 0; i < r; ++i)
          worst_flux = std::max(worst_flux, std::abs(s.flux[static_cast<std::size_t>(i)] - (*flux)[k][static_cast<std::size_t>(i)]));
      table.add(std::move(row));
      const std::string sidecar = "corrector_" + std::to_string(k) + ".grid";
      json entry = correctors::cell_solution_to_json(s, sidecar, out.dir());
      out.record(sidecar);
      entry["corrector_norm"] = norm;
      entries.push_back(entry);
    }
    out.criterion("converged", worst_residual <= residual_cap, "worst residual " + fmt(worst_residual));
    if (corrector_cap) out.criterion("corrector_norm", worst_norm <= *corrector_cap, "largest corrector RMS " + fmt(worst_norm));
    if (flux) out.criterion("flux", worst_flux <= tolerance, "largest flux deviation " + fmt(worst_flux));
    if (closed_form) out.criterion("closed_form", worst_cf <= tolerance, "largest deviation from the closed form " + fmt(worst_cf));
    out.csv("cell.csv", table);
    res.summary = {{"solutions", entries}, {"corrector_norm", worst_norm}, {"residual", worst_residual}};
    out.json_file("cell.json", res.summary);
    return res;
  };
  return e;
}

std::vector<std::vector<double>> axes_from_json(const json& doc, const std::string& path) {
  if (!doc.is_array() || doc.empty()) throw ParseError("axes must be a list of sample lists", path);
  std::vector<std::vector<double>> axes;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto p = ju::child(path, i);
    axes.push_back(ju::numbers(doc[i], p));
    for (std::size_t k = 1; k < axes.back().size(); ++k)
      if (!(axes.back()[k] > axes.back()[k - 1])) throw ParseError("axis samples must increase", ju::child(p, k));
  }
  return axes;
}

Experiment parse_effective(const json& doc, Common c, const std::filesystem::path& base_dir) {
  ju::require_keys(doc, "", {HOMOG_COMMON_KEYS, "operator", "axes", "model", "cell"});
  const auto op = operator_from_json(ju::at(doc, "", "operator"), "/operator", base_dir);
  rethrow_as_parse("/operator", [&] {
    op.validate();
    return 0;
  });
  std::vector<std::vector<double>> axes;
  if (doc.contains("axes")) {
    axes = axes_from_json(doc.at("axes"), "/axes");
    if (static_cast<int>(axes.size()) != op.components())
      throw ParseError("axes needs one sample list per gradient component", "/axes");
  }
  const auto kind = ju::get_or<std::string>(doc, "", "model", "auto");
  if (kind != "auto" && kind != "closed" && kind != "table")
    throw ParseError("model must be auto, closed or table", "/model");
  const bool closed = kind == "closed" || (kind == "auto" && (!op.b || op.constant_coefficients()));
  if (kind == "closed" && op.b && !op.constant_coefficients())
    throw ParseError("closed models need a linear operator or constant coefficients", "/model");
  const auto opts = doc.contains("cell") ? cell_options_from_json(doc.at("cell"), "/cell") : CellOptions{};
  const json expect = expect_of(doc, {"tensor", "tolerance"});
  std::optional<std::vector<double>> tensor;
  if (expect.contains("tensor")) {
    if (!closed) throw ParseError("an expected tensor needs a closed model", "/expect/tensor");
    tensor = ju::numbers(expect.at("tensor"), "/expect/tensor");
    const auto r = static_cast<std::size_t>(op.components());
    if (tensor->size() != r * r) throw ParseError("tensor needs r*r entries", "/expect/tensor");
  }
  const double tolerance = ju::get_or<double>(expect, "/expect", "tolerance", 1e-3);

  c.canonical["operator"] = to_json(op);
  if (!axes.empty()) c.canonical["axes"] = axes;
  c.canonical["model"] = kind;
  c.canonical["cell"] = to_json(opts);
  c.canonical["expect"] = expect;

  Experiment e{c.kind, c.seed, c.canonical, {}};
  e.run = [=](const RunContext& ctx) {
    RunResult res;
    Output out(ctx, res);
    const EffectiveModel model =
        closed ? correctors::closed_effective_model(op, opts)
               : correctors::effective_coefficients(op, axes.empty() ? correctors::default_axes(op.components()) : axes,
                                                    opts, ctx.threads);
    const int r = model.components();
    if (model.kind() == EffectiveModel::Kind::Closed) {
      CsvTable t({"row", "col", "value"});
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) t.add({i, j, model.tensor()[static_cast<std::size_t>(i * r + j)]});
      out.csv("effective.csv", t);
    } else {
      std::vector<std::string> cols;
      for (const char* pre : {"xi_", "m_", "M_"})
        for (int i = 0; i < r; ++i) cols.push_back(pre + std::to_string(i));
      CsvTable t(cols);
      const auto& ax = model.axes();
      std::vector<std::size_t> idx(ax.size(), 0);
      for (std::size_t n = 0; n < model.points(); ++n) {
        std::vector<CsvTable::Cell> row;
        for (std::size_t i = 0; i < ax.size(); ++i) row.emplace_back(ax[i][idx[i]]);
        for (int i = 0; i < r; ++i) row.emplace_back(model.m_values()[n * static_cast<std::size_t>(r) + static_cast<std::size_t>(i)]);
        for (int i = 0; i < r; ++i) row.emplace_back(model.M_values()[n * static_cast<std::size_t>(r) + static_cast<std::size_t>(i)]);
        t.add(std::move(row));
        for (std::size_t i = ax.size(); i-- > 0;) {
          if (++idx[i] < ax[i].size()) break;
          idx[i] = 0;
        }
      }
      out.csv("effective.csv", t);
    }
    const double gap = model.monotonicity_gap();
    const double zero = model.flux_at_zero();
    out.criterion("monotone", gap >= -1e-10, "smallest pair product " + fmt(gap));
    out.criterion("zero_flux", zero <= 1e-10, "|A(0)| = " + fmt(zero));
    if (tensor) {
      double worst = 0;
      for (std::size_t i = 0; i < tensor->size(); ++i) worst = std::max(worst, std::abs(model.tensor()[i] - (*tensor)[i]));
      out.criterion("tensor", worst <= tolerance, "largest entry deviation " + fmt(worst));
    }
    res.summary = {{"model", model.to_json()}, {"monotonicity_gap", gap}, {"flux_at_zero", zero}};
    out.json_file("model.json", model.to_json());
    out.json_file("effective.json", res.summary);
    return res;
  };
  return e;
}

// --- minimize ---------------------------------------------------------------

Experiment parse_minimize(const json& doc, Common c, const std::filesystem::path& base_dir) {
  ju::require_keys(doc, "", {HOMOG_COMMON_KEYS, "density", "domain", "load", "eps_list", "cell", "newton",
                             "check_resolution"});
  const auto f = density_from_json(ju::at(doc, "", "density"), "/density", base_dir);
  rethrow_as_parse("/density", [&] {
    f.validate();
    return 0;
  });
  solvers::MinimizeProblem prob;
  prob.domain = domain_from_json(ju::at(doc, "", "domain"), "/domain");
  if (prob.domain.dimension() != f.dimension) throw ParseError("domain dimension differs from the density", "/domain");
  prob.load = doc.contains("load") ? macro::macro_from_json(doc.at("load"), f.dimension, "/load")
                                   : MacroFunction::constant(f.dimension, 1.0);
  if (doc.contains("newton")) prob.newton = newton_from_json(doc.at("newton"), "/newton");
  prob.check_resolution = ju::get_or<bool>(doc, "", "check_resolution", true);
  const auto eps_list = eps_ladder(doc, "", "eps_list", {0.125, 0.0625, 0.03125, 0.015625});
  if (prob.check_resolution && prob.domain.h() > eps_list.back() / 8 * (1 + 1e-12))
    throw ParseError("mesh width does not resolve eps/8 for the smallest eps", "/domain/cells");
  const auto opts = doc.contains("cell") ? cell_options_from_json(doc.at("cell"), "/cell") : CellOptions{};
  const json expect = expect_of(doc, {"monotone", "final_gap", "distance"});
  const bool monotone = ju::get_or<bool>(expect, "/expect", "monotone", true);
  const double final_gap = ju::get_or<double>(expect, "/expect", "final_gap", 1e-2);
  const double distance = ju::get_or<double>(expect, "/expect", "distance", 5e-2);

  c.canonical["density"] = to_json(f);
  c.canonical["domain"] = to_json(prob.domain);
  c.canonical["load"] = macro::to_json(prob.load);
  c.canonical["newton"] = to_json(prob.newton);
  c.canonical["check_resolution"] = prob.check_resolution;
  c.canonical["eps_list"] = eps_list;
  c.canonical["cell"] = to_json(opts);
  c.canonical["expect"] = {{"monotone", monotone}, {"final_gap", final_gap}, {"distance", distance}};

  Experiment e{c.kind, c.seed, c.canonical, {}};
  e.run = [=](const RunContext& ctx) {
    RunResult res;
    Output out(ctx, res);
    const auto model = solvers::density_model(f, opts);
    const auto hom = solvers::minimize_homogenized_functional(model, f.weight, prob);
    std::vector<solvers::SolutionField> sols(eps_list.size());
    parallel_for(eps_list.size(), ctx.threads,
                 [&](std::size_t k) { sols[k] = solvers::minimize_functional_eps(f, eps_list[k], prob); });
    CsvTable table({"eps", "energy_eps", "energy_hom", "gap", "l2_distance"});
    std::vector<double> gaps, dists;
    for (std::size_t k = 0; k < sols.size(); ++k) {
      gaps.push_back(std::abs(sols[k].energy - hom.energy));
      dists.push_back(solvers::l2_norm(*sols[k].mesh, sols[k].final_state() - hom.final_state()));
      table.add({eps_list[k], sols[k].energy, hom.energy, gaps.back(), dists.back()});
    }
    bool decreasing = true;
    for (std::size_t k = 1; k < gaps.size(); ++k) decreasing = decreasing && gaps[k] < gaps[k - 1];
    if (monotone) {
      std::string detail = "gaps";
      for (double g : gaps) detail += " " + fmt(g);
      out.criterion("monotone_gap", decreasing, detail);
    }
    out.criterion("final_gap", gaps.back() <= final_gap, fmt(gaps.back()) + " <= " + fmt(final_gap));
    out.criterion("distance", dists.back() <= distance, fmt(dists.back()) + " <= " + fmt(distance));
    out.csv("minimize.csv", table);
    res.summary = {{"model", model.to_json()}, {"energy_hom", hom.energy}, {"gaps", gaps}, {"distances", dists},
                   {"monotone", decreasing}};
    out.json_file("minimize.json", res.summary);
    return res;
  };
  return e;
}

// --- parabolic, spde and study ----------------------------------------------

struct Ladder {
  EvolutionConfig base;
  std::vector<double> eps_list;
  CellOptions cell;
  std::vector<std::vector<double>> axes;
};

Ladder ladder_from_json(const json& doc, const std::filesystem::path& base_dir, bool stochastic) {
  Ladder l;
  l.base = evolution_from_json(ju::at(doc, "", "evolution"), "/evolution", base_dir);
  if (!stochastic && !l.base.noise.zero())
    throw ParseError("deterministic runs need g = 0 (no noise modes)", "/evolution/noise");
  if (stochastic && l.base.noise.modes.empty()) throw ParseError("stochastic runs need at least one noise mode", "/evolution/noise");
  l.eps_list = eps_ladder(doc, "", "eps_list", {l.base.eps});
  if (doc.contains("cell")) l.cell = cell_options_from_json(doc.at("cell"), "/cell");
  if (doc.contains("axes")) {
    l.axes = axes_from_json(doc.at("axes"), "/axes");
    if (static_cast<int>(l.axes.size()) != l.base.op.components())
      throw ParseError("axes needs one sample list per gradient component", "/axes");
  }
  if (l.base.check_resolution && l.base.domain.h() > l.eps_list.back() / 8 * (1 + 1e-12))
    throw ParseError("mesh width does not resolve eps/8 for the smallest eps", "/evolution/domain/cells");
  return l;
}

void ladder_canonical(json& canonical, const Ladder& l) {
  canonical["evolution"] = to_json(l.base);
  canonical["eps_list"] = l.eps_list;
  canonical["cell"] = to_json(l.cell);
  if (!l.axes.empty()) canonical["axes"] = l.axes;
}

struct ErrorExpect {
  bool monotone = true;
  std::optional<double> ratio;
  std::optional<double> max_error;
  std::optional<double> max_divergence;
};

ErrorExpect error_expect(const json& expect, const EvolutionConfig& base) {
  ErrorExpect x;
  x.monotone = ju::get_or<bool>(expect, "/expect", "monotone", true);
  if (expect.contains("ratio")) x.ratio = positive(expect, "/expect", "ratio", 1.0);
  if (expect.contains("max_error")) x.max_error = positive(expect, "/expect", "max_error", 1.0);
  if (expect.contains("max_divergence"))
    x.max_divergence = positive(expect, "/expect", "max_divergence", 1e-8);
  else if (base.mode == EvolutionMode::Vector)
    x.max_divergence = 1e-8;
  return x;
}

json expect_json(const ErrorExpect& x) {
  json doc = {{"monotone", x.monotone}};
  if (x.ratio) doc["ratio"] = *x.ratio;
  if (x.max_error) doc["max_error"] = *x.max_error;
  if (x.max_divergence) doc["max_divergence"] = *x.max_divergence;
  return doc;
}

void error_criteria(Output& out, const ErrorExpect& x, const std::vector<double>& errors, double divergence,
                    const std::string& what) {
  std::string list;
  for (double v : errors) list += (list.empty() ? "" : " ") + fmt(v);
  if (x.monotone) {
    bool dec = true;
    for (std::size_t k = 1; k < errors.size(); ++k) dec = dec && errors[k] < errors[k - 1];
    out.criterion("monotone", dec, what + " " + list);
  }
  if (x.ratio)
    out.criterion("ratio", errors.back() <= errors.front() / *x.ratio,
                  fmt(errors.back()) + " <= " + fmt(errors.front()) + " / " + fmt(*x.ratio));
  if (x.max_error) {
    const double worst = *std::max_element(errors.begin(), errors.end());
    out.criterion("max_error", worst <= *x.max_error, fmt(worst) + " <= " + fmt(*x.max_error));
  }
  if (x.max_divergence)
    out.criterion("divergence", divergence <= *x.max_divergence, fmt(divergence) + " <= " + fmt(*x.max_divergence));
}

EvolutionConfig level_config(const EvolutionConfig& base, double eps, double dt) {
  EvolutionConfig c = base;
  const double ratio = base.eps_time ? *base.eps_time / base.eps : 1.0;
  c.eps = eps;
  if (base.eps_time) c.eps_time = eps * ratio;
  c.dt = dt;
  return c;
}

void check_aborted(const solvers::SolutionField& u) {
  if (u.aborted)
    throw NonConvergence("trajectory aborted: " + u.abort_reason, u.l2.empty() ? 0.0 : u.l2.back(),
                         static_cast<int>(u.times.size()) - 1);
}

Experiment parse_trajectories(const json& doc, Common c, const std::filesystem::path& base_dir) {
  const bool stochastic = c.kind == "spde";
  ju::require_keys(doc, "", {HOMOG_COMMON_KEYS, "evolution", "eps_list", "cell", "axes", "dump_states"});
  const auto l = ladder_from_json(doc, base_dir, stochastic);
  const bool dump = ju::get_or<bool>(doc, "", "dump_states", false);
  const auto x = error_expect(expect_of(doc, {"monotone", "ratio", "max_error", "max_divergence"}), l.base);
  ladder_canonical(c.canonical, l);
  c.canonical["dump_states"] = dump;
  c.canonical["expect"] = expect_json(x);

  Experiment e{c.kind, c.seed, c.canonical, {}};
  const std::uint64_t default_seed = c.seed;
  e.run = [=](const RunContext& ctx) {
    RunResult res;
    Output out(ctx, res);
    const std::uint64_t seed = ctx.seed.value_or(default_seed);
    const auto model = solvers::evolution_model(l.base, l.cell, ctx.threads, l.axes);
    const double max_dt = l.base.dt > 0 ? l.base.dt : level_config(l.base, l.eps_list.back(), 0.0).time_scale() / 4;
    const EvolutionConfig hom_cfg = level_config(l.base, l.eps_list.front(), max_dt);
    const int steps = hom_cfg.steps();
    const double dt = hom_cfg.T / steps;
    const int m = std::max(1, l.base.noise.dimension());
    const auto path = stochastic ? wiener::WienerPath(seed, m, steps, dt) : wiener::WienerPath::zero(m, steps, dt);
    const auto hom = stochastic ? solvers::solve_spde_homogenized(model, hom_cfg, path)
                                : solvers::solve_parabolic_homogenized(model, hom_cfg);
    check_aborted(hom);
    std::vector<solvers::SolutionField> sols(l.eps_list.size());
    parallel_for(sols.size(), ctx.threads, [&](std::size_t k) {
      const auto cfg = level_config(l.base, l.eps_list[k], max_dt);
      sols[k] = stochastic ? solvers::solve_spde_eps(cfg, path) : solvers::solve_parabolic_eps(cfg);
      check_aborted(sols[k]);
    });
    CsvTable traj({"eps", "t", "l2", "h1", "vnorm"});
    auto add_traj = [&](double eps, const solvers::SolutionField& u) {
      for (std::size_t n = 0; n < u.times.size(); ++n) traj.add({eps, u.times[n], u.l2[n], u.h1[n], u.vnorm[n]});
    };
    add_traj(0.0, hom);
    CsvTable errs({"eps", "error", "final_distance", "max_divergence", "newton_iterations"});
    std::vector<double> errors;
    double divergence = 0;
    for (std::size_t k = 0; k < sols.size(); ++k) {
      add_traj(l.eps_list[k], sols[k]);
      errors.push_back(solvers::l2_qt_distance(sols[k], hom));
      divergence = std::max(divergence, sols[k].max_divergence);
      errs.add({l.eps_list[k], errors.back(), solvers::final_l2_distance(sols[k], hom), sols[k].max_divergence,
                sols[k].newton_iterations});
    }
    error_criteria(out, x, errors, divergence, "errors");
    out.csv("trajectory.csv", traj);
    out.csv("errors.csv", errs);
    if (dump) {
      auto dump_states = [&](const std::string& name, const solvers::SolutionField& u, double eps) {
        std::vector<double> values;
        for (const auto& s : u.states) values.insert(values.end(), s.data(), s.data() + s.size());
        const std::vector<std::uint64_t> dims{u.states.size(), static_cast<std::uint64_t>(u.states.front().size())};
        correctors::write_grid_sidecar(out.dir() / (name + ".grid"), dims, values);
        out.record(name + ".grid");
        out.json_file(name + ".json", {{"path", name + ".grid"},
                                       {"shape", dims},
                                       {"dx", l.base.domain.h()},
                                       {"dt", dt},
                                       {"seed", seed},
                                       {"eps", eps},
                                       {"mode", solvers::to_string(u.mode)}});
      };
      dump_states("states_hom", hom, 0.0);
      for (std::size_t k = 0; k < sols.size(); ++k) dump_states("states_" + std::to_string(k), sols[k], l.eps_list[k]);
    }
    res.summary = {{"model", model.to_json()}, {"dt", dt}, {"steps", steps}, {"seed", seed},
                   {"eps", l.eps_list},        {"errors", errors}, {"max_divergence", divergence}};
    out.json_file(c.kind + ".json", res.summary);
    return res;
  };
  return e;
}

json stats_json(const solvers::AprioriStats& s) {
  return {{"samples", s.samples},   {"sup_l2sq", s.sup_l2sq}, {"sup_l2sq_se", s.sup_l2sq_se},
          {"int_h1sq", s.int_h1sq}, {"int_h1sq_se", s.int_h1sq_se}, {"int_vp", s.int_vp},
          {"int_vp_se", s.int_vp_se}};
}

Experiment parse_study(const json& doc, Common c, const std::filesystem::path& base_dir) {
  ju::require_keys(doc, "", {HOMOG_COMMON_KEYS, "evolution", "eps_list", "cell", "axes", "trials", "stochastic"});
  const bool stochastic = ju::get_or<bool>(doc, "", "stochastic", false);
  const auto l = ladder_from_json(doc, base_dir, stochastic);
  const int trials = ju::get_or<int>(doc, "", "trials", 1);
  if (trials < 1) throw ParseError("trials must be positive", "/trials");
  if (!stochastic && trials != 1) throw ParseError("deterministic studies run a single trial", "/trials");
  const json expect = expect_of(doc, {"monotone", "ratio", "max_error", "max_divergence", "trend_tolerance"});
  const auto x = error_expect(expect, l.base);
  std::optional<double> trend;
  if (expect.contains("trend_tolerance"))
    trend = positive(expect, "/expect", "trend_tolerance", 0.05);
  else if (stochastic)
    trend = 0.05;
  ladder_canonical(c.canonical, l);
  c.canonical["trials"] = trials;
  c.canonical["stochastic"] = stochastic;
  c.canonical["expect"] = expect_json(x);
  if (trend) c.canonical["expect"]["trend_tolerance"] = *trend;

  Experiment e{c.kind, c.seed, c.canonical, {}};
  const std::uint64_t default_seed = c.seed;
  e.run = [=](const RunContext& ctx) {
    RunResult res;
    Output out(ctx, res);
    solvers::StudyConfig st;
    st.base = l.base;
    st.eps_list = l.eps_list;
    st.trials = trials;
    st.stochastic = stochastic;
    st.seed = ctx.seed.value_or(default_seed);
    st.threads = ctx.threads;
    st.cell = l.cell;
    st.model = solvers::evolution_model(l.base, l.cell, ctx.threads, l.axes);
    const auto rep = solvers::convergence_study(st);
    CsvTable rows({"eps", "trial", "error", "sup_l2sq", "int_h1sq", "int_vp", "max_divergence"});
    double divergence = 0;
    for (const auto& r : rep.rows) {
      rows.add({r.eps, r.trial, r.error, r.sup_l2sq, r.int_h1sq, r.int_vp, r.max_divergence});
      divergence = std::max(divergence, r.max_divergence);
    }
    CsvTable levels({"eps", "median", "upper_quartile", "mean", "sup_l2sq", "sup_l2sq_se", "int_h1sq", "int_h1sq_se",
                     "int_vp", "int_vp_se"});
    std::vector<double> medians;
    std::vector<solvers::AprioriStats> stats;
    json lv = json::array();
    for (const auto& v : rep.levels) {
      levels.add({v.eps, v.median, v.upper_quartile, v.mean, v.stats.sup_l2sq, v.stats.sup_l2sq_se, v.stats.int_h1sq,
                  v.stats.int_h1sq_se, v.stats.int_vp, v.stats.int_vp_se});
      medians.push_back(v.median);
      stats.push_back(v.stats);
      lv.push_back({{"eps", v.eps}, {"median", v.median}, {"upper_quartile", v.upper_quartile}, {"mean", v.mean},
                    {"stats", stats_json(v.stats)}});
    }
    error_criteria(out, x, medians, divergence, stochastic ? "medians" : "errors");
    const auto tr = solvers::apriori_trend(stats, trend.value_or(0.05));
    if (trend) out.criterion("apriori_trend", tr.flat, "spread of E sup |u|^2 " + fmt(tr.spread) + " <= " + fmt(*trend));
    out.csv("study.csv", rows);
    out.csv("levels.csv", levels);
    res.summary = {{"levels", lv},
                   {"homogenized", stats_json(rep.homogenized)},
                   {"rate", rep.rate},
                   {"monotone", rep.monotone},
                   {"trend_spread", tr.spread},
                   {"dt", rep.dt},
                   {"seed", st.seed},
                   {"trials", trials},
                   {"model", rep.model}};
    out.json_file("study.json", res.summary);
    return res;
  };
  return e;
}

}  // namespace

Experiment parse_experiment(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ParseError("experiment config must be a table", "");
  Common c = common(doc);
  Experiment e;
  if (c.kind == "mean-value")
    e = parse_mean_value(doc, std::move(c), base_dir);
  else if (c.kind == "sigma-check")
    e = parse_sigma(doc, std::move(c));
  else if (c.kind == "young")
    e = parse_young(doc, std::move(c));
  else if (c.kind == "cell")
    e = parse_cell(doc, std::move(c), base_dir);
  else if (c.kind == "effective")
    e = parse_effective(doc, std::move(c), base_dir);
  else if (c.kind == "minimize")
    e = parse_minimize(doc, std::move(c), base_dir);
  else if (c.kind == "parabolic" || c.kind == "spde")
    e = parse_trajectories(doc, std::move(c), base_dir);
  else
    e = parse_study(doc, std::move(c), base_dir);
  auto run = std::move(e.run);
  const std::string kind = e.kind;
  const std::uint64_t seed = e.seed;
  e.run = [run, kind, seed](const RunContext& ctx) {
    RunResult r = run(ctx);
    r.kind = kind;
    r.seed = ctx.seed.value_or(seed);
    return r;
  };
  return e;
}

RunResult run_experiment(const json& doc, const RunContext& ctx, const std::filesystem::path& base_dir) {
  return parse_experiment(doc, base_dir).run(ctx);
}

}  // namespace homog::studies
