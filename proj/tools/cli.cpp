#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <Eigen/Core>
#include <boost/version.hpp>

#include "homog/config.hpp"
#include "homog/error.hpp"
#include "homog/report_io.hpp"
#include "homog/studies.hpp"

namespace homog::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

namespace {

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw UsageError("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json versions() {
  return {{"homog", HOMOG_VERSION},
          {"compiler", std::string(__VERSION__)},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) + "." +
                        std::to_string(BOOST_VERSION % 100)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

struct Options {
  std::string config;
  std::string example;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  int threads = 0;
};

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("HOMOG_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("HOMOG_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

void write_manifest(const fs::path& dir, const json& head, const std::vector<fs::path>& artifacts) {
  json list = json::array();
  for (const auto& a : artifacts) {
    const auto bytes = read_file(dir / a);
    list.push_back({{"path", a.generic_string()}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }
  json manifest = head;
  manifest["artifacts"] = list;
  report::write_json(dir / "manifest.json", manifest);
}

struct Source {
  std::string name;      // for messages
  std::string bytes;     // hashed
  config::Document doc;  // parsed
  fs::path base_dir;
};

// Runs a parsed document end to end and maps failures to exit codes.
int execute(const Source& src, const std::string& required_kind, const Options& opt, std::ostream& out,
            std::ostream& err) {
  studies::Experiment exp;
  int threads = 1;
  try {
    threads = resolve_threads(opt.threads);
    exp = studies::parse_experiment(src.doc.data, src.base_dir);
    if (!required_kind.empty() && exp.kind != required_kind)
      throw ParseError("config kind '" + exp.kind + "' does not match subcommand '" + required_kind + "'", "/kind");
  } catch (const ParseError& e) {
    err << "error: " << config::describe(src.doc, e) << "\n";
    return kInvalid;
  } catch (const UsageError& e) {
    err << "error: " << src.name << ": " << e.what() << "\n";
    return kInvalid;
  }

  const fs::path dir = opt.out;
  studies::RunContext ctx{dir, opt.seed, threads};
  json head = {{"config", {{"path", src.name}, {"sha256", sha256_hex(src.bytes)}}},
               {"kind", exp.kind},
               {"seed", opt.seed.value_or(exp.seed)},
               {"versions", versions()}};
  std::vector<fs::path> artifacts;
  auto numerical = [&](const std::string& type, const std::string& what, json extra) {
    json diag = {{"error", type}, {"message", what}};
    diag.update(extra);
    report::write_json(dir / "diagnostics.json", diag);
    artifacts.emplace_back("diagnostics.json");
    head["status"] = "numerical-failure";
    write_manifest(dir, head, artifacts);
    err << "numerical failure (" << type << "): " << what << "\n";
    err << "diagnostics written to " << (dir / "diagnostics.json").string() << "\n";
    return kNumerical;
  };
  try {
    fs::create_directories(dir);
    report::write_json(dir / "config.json", exp.canonical);
    artifacts.emplace_back("config.json");
    const auto res = exp.run(ctx);
    artifacts.insert(artifacts.end(), res.artifacts.begin(), res.artifacts.end());
    json criteria = json::array();
    for (const auto& c : res.criteria) {
      out << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
      criteria.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    head["status"] = res.pass() ? "pass" : "fail";
    head["criteria"] = criteria;
    write_manifest(dir, head, artifacts);
    out << exp.kind << ": " << (res.pass() ? "all criteria hold" : "criteria failed") << " (artifacts in "
        << dir.string() << ")\n";
    return res.pass() ? kPass : kFailed;
  } catch (const NonConvergence& e) {
    return numerical("non-convergence", e.what(), {{"residual", e.residual()}, {"iterations", e.iterations()}});
  } catch (const ClippedMassError& e) {
    return numerical("clipped-mass", e.what(), {{"fraction", e.fraction()}});
  } catch (const RangeError& e) {
    return numerical("range", e.what(), json::object());
  } catch (const BudgetError& e) {
    return numerical("budget", e.what(), json::object());
  } catch (const ParseError& e) {
    err << "error: " << config::describe(src.doc, e) << "\n";
    return kInvalid;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const InvalidOperator& e) {
    err << "invalid operator: " << e.what() << "\n";
    return kInvalid;
  } catch (const GeometryMismatch& e) {
    err << "geometry mismatch: " << e.what() << "\n";
    return kInvalid;
  } catch (const UnsupportedOperation& e) {
    err << "unsupported: " << e.what() << "\n";
    return kInvalid;
  }
}

Source load_config(const std::string& path) {
  Source s;
  s.name = path;
  s.bytes = read_file(path);
  s.doc = fs::path(path).extension() == ".json" ? config::parse_json(s.bytes, path) : config::parse_toml(s.bytes, path);
  s.base_dir = fs::path(path).parent_path();
  if (s.base_dir.empty()) s.base_dir = ".";
  return s;
}

Source load_example(const std::string& name) {
  const auto& sc = studies::find_scenario(name);
  Source s;
  s.name = "example:" + name;
  s.bytes = config::to_toml(sc.config);
  s.doc = config::parse_toml(s.bytes, s.name);
  s.base_dir = ".";
  return s;
}

void add_run_options(CLI::App* cmd, Options& opt, bool config_required) {
  auto* c = cmd->add_option("-c,--config", opt.config, "Experiment config (.toml or .json)");
  if (config_required) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", opt.seed, "Seed overriding the config seed");
  cmd->add_option("-o,--out", opt.out, "Output directory")->capture_default_str();
  cmd->add_option("-t,--threads", opt.threads, "Worker threads (default: HOMOG_THREADS or 1)")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Numerical homogenization laboratory", "homog"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(HOMOG_VERSION));
  Options opt;
  std::string format = "toml";

  auto* run_cmd = app.add_subcommand("run", "Run an experiment config of any kind");
  add_run_options(run_cmd, opt, true);

  std::vector<std::pair<std::string, CLI::App*>> kind_cmds;
  for (const auto& kind : studies::experiment_kinds()) {
    auto* cmd = app.add_subcommand(kind, "Run a '" + kind + "' experiment config");
    add_run_options(cmd, opt, true);
    kind_cmds.emplace_back(kind, cmd);
  }

  auto* run_example = app.add_subcommand("run-example", "Run a built-in scenario");
  run_example->add_option("name", opt.example, "Scenario name")->required();
  add_run_options(run_example, opt, false);

  auto* list = app.add_subcommand("list-examples", "List the built-in scenario catalog");
  auto* show = app.add_subcommand("show-example", "Print a built-in scenario config");
  show->add_option("name", opt.example, "Scenario name")->required();
  show->add_option("--format", format, "toml or json")->check(CLI::IsMember({"toml", "json"}))->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kPass;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kPass;
  } catch (const CLI::CallForVersion&) {
    out << HOMOG_VERSION << "\n";
    return kPass;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }

  try {
    if (list->parsed()) {
      for (const auto& s : studies::scenario_catalog())
        out << s.name << "  [" << s.family << ", " << s.config.at("kind").get<std::string>() << "]  " << s.description
            << "\n";
      return kPass;
    }
    if (show->parsed()) {
      const auto& sc = studies::find_scenario(opt.example);
      out << (format == "json" ? report::json_text(sc.config) : config::to_toml(sc.config));
      return kPass;
    }
    if (run_example->parsed()) {
      const Source src = opt.config.empty() ? load_example(opt.example) : load_config(opt.config);
      return execute(src, "", opt, out, err);
    }
    std::string kind;
    for (const auto& [k, cmd] : kind_cmds)
      if (cmd->parsed()) kind = k;
    Source src;
    try {
      src = load_config(opt.config);
    } catch (const config::SyntaxError& e) {
      err << "error: " << opt.config << ":" << e.line() << ": " << e.what() << "\n";
      return kInvalid;
    }
    return execute(src, kind, opt, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
}

}  // namespace homog::cli
