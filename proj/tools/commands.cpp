#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcreg/censoring.hpp"
#include "dcreg/csv.hpp"
#include "dcreg/data.hpp"
#include "dcreg/error.hpp"
#include "dcreg/estimation.hpp"
#include "dcreg/inference.hpp"
#include "dcreg/scenario_json.hpp"
#include "dcreg/simulation.hpp"
#include "dcreg/smoothing.hpp"

#ifndef DCREG_VERSION
#define DCREG_VERSION "0.0.0"
#endif

namespace dcreg::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double x) { return csv::number(x); }

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  for (auto& part : csv::split(s, ','))
    if (!part.empty()) out.push_back(part);
  return out;
}

std::vector<double> number_list(std::string_view s, const std::string& what) {
  std::vector<double> out;
  for (const auto& part : split_list(s)) {
    double x = 0.0;
    if (!csv::parse_double(part, x)) throw UsageError(what + ": '" + part + "' is not a number");
    out.push_back(x);
  }
  return out;
}

std::uint64_t parse_count(const std::string& text, const std::string& what) {
  try {
    std::size_t pos = 0;
    if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
    const auto v = std::stoull(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    throw UsageError(what + " must be a non-negative integer, got '" + text + "'");
  }
}

std::uint64_t env_seed() {
  const char* s = std::getenv("DCREG_SEED");
  if (s == nullptr || *s == '\0') return 1;
  return parse_count(s, "DCREG_SEED");
}

// ---------------------------------------------------------------------------
// config plumbing: defaults <- config file <- flags

template <class T>
T get(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("config: '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& j, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw UsageError("config: '" + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

// Keys of `patch` must already exist in `base`; an empty object in `base`
// accepts any content (it is validated later by its consumer).
void overlay(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw UsageError(where + ": expected a JSON object");
  for (const auto& [key, val] : patch.items()) {
    if (!base.contains(key)) throw UsageError(where + ": unknown key '" + key + "'");
    json& slot = base[key];
    if (slot.is_object() && !slot.empty() && val.is_object())
      overlay(slot, val, where + "." + key);
    else
      slot = val;
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config '" + path + "': " + e.what());
  }
}

std::vector<std::string> string_list(const json& j, const std::string& key) {
  if (j.is_string()) return split_list(j.get<std::string>());
  if (j.is_array()) {
    std::vector<std::string> out;
    for (const auto& e : j) {
      if (!e.is_string()) throw UsageError("config: '" + key + "' must hold strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }
  throw UsageError("config: '" + key + "' must be a string or a list of strings");
}

std::vector<double> age_list(const json& j) {
  if (j.is_string()) return parse_age_grid(j.get<std::string>());
  if (j.is_number()) return {j.get<double>()};
  if (j.is_array()) {
    std::vector<double> out;
    for (const auto& e : j) {
      if (!e.is_number()) throw UsageError("config: 't0' must hold numbers");
      out.push_back(e.get<double>());
    }
    if (out.empty()) throw Error(ErrorCode::InvalidParameter, "empty analysis-age grid");
    for (std::size_t k = 1; k < out.size(); ++k)
      if (!(out[k] > out[k - 1])) throw Error(ErrorCode::InvalidParameter, "analysis ages must be strictly increasing");
    return out;
  }
  throw UsageError("config: 't0' must be \"start:end:step\", a comma list or an array");
}

void set_path(json& cfg, const std::string& path, json value) {
  json* node = &cfg;
  for (const auto& part : csv::split(path, '.')) node = &(*node)[part];
  *node = std::move(value);
}

// Command-line flags that override config entries. Each flag knows the
// config path it writes and how to convert its text.
class FlagPatch {
 public:
  enum class Kind { Text, Number, Count, Numbers, SetTrue, SetFalse };

  explicit FlagPatch(CLI::App* app) : app_(app) {}

  void add(const std::string& name, const std::string& path, Kind kind, const std::string& help) {
    auto& e = entries_.emplace_back();
    e.path = path;
    e.kind = kind;
    if (kind == Kind::SetTrue || kind == Kind::SetFalse)
      e.option = app_->add_flag(name, help);
    else
      e.option = app_->add_option(name, e.text, help);
  }

  void apply(json& cfg) const {
    for (const auto& e : entries_) {
      if (e.option->count() == 0) continue;
      const std::string what = e.option->get_name();
      switch (e.kind) {
        case Kind::Text: set_path(cfg, e.path, e.text); break;
        case Kind::Number: {
          double x = 0.0;
          if (!csv::parse_double(e.text, x)) throw UsageError(what + ": '" + e.text + "' is not a number");
          set_path(cfg, e.path, x);
          break;
        }
        case Kind::Count: set_path(cfg, e.path, parse_count(e.text, what)); break;
        case Kind::Numbers: set_path(cfg, e.path, number_list(e.text, what)); break;
        case Kind::SetTrue: set_path(cfg, e.path, true); break;
        case Kind::SetFalse: set_path(cfg, e.path, false); break;
      }
    }
  }

 private:
  struct Entry {
    CLI::Option* option = nullptr;
    std::string text;
    std::string path;
    Kind kind = Kind::Text;
  };
  CLI::App* app_;
  std::deque<Entry> entries_;  // stable addresses for CLI11 to write into
};

json forest_defaults() {
  return {{"n_trees", 100}, {"min_node_size", 100}, {"mtry", 0}, {"oob", true}, {"seed", nullptr}};
}

json strata_defaults() { return {{"covariate", 0}, {"cutpoints", {0.25, 0.5, 0.75}}}; }

void add_censoring_flags(FlagPatch& f) {
  using K = FlagPatch::Kind;
  f.add("--trees", "forest.n_trees", K::Count, "survival forest: number of trees");
  f.add("--node-size", "forest.min_node_size", K::Count, "survival forest: minimal node size to split at");
  f.add("--mtry", "forest.mtry", K::Count, "survival forest: covariates tried per split (0: sqrt(p))");
  f.add("--forest-seed", "forest.seed", K::Count, "survival forest: seed (default: --seed)");
  f.add("--no-oob", "forest.oob", K::SetFalse, "survival forest: use all trees for in-sample subjects");
  f.add("--strata-covariate", "strata.covariate", K::Count, "ecdf: covariate index (0-based) defining strata");
  f.add("--cutpoints", "strata.cutpoints", K::Numbers, "ecdf: stratum cutpoints, comma separated");
}

ForestParams forest_params(const json& f) {
  ForestParams p;
  p.n_trees = get_count(f, "n_trees");
  p.min_node_size = get_count(f, "min_node_size");
  p.mtry = get_count(f, "mtry");
  p.oob_for_insample = get<bool>(f, "oob");
  p.seed = get_count(f, "seed");
  return p;
}

StrataSpec strata_spec(const json& s) {
  StrataSpec out;
  out.covariate = get_count(s, "covariate");
  out.cutpoints = get<std::vector<double>>(s, "cutpoints");
  for (std::size_t k = 1; k < out.cutpoints.size(); ++k)
    if (!(out.cutpoints[k] > out.cutpoints[k - 1])) throw UsageError("strata cutpoints must be increasing");
  return out;
}

// One entry of a "censoring"/"methods" list: a method name, or an object
// {"method": ..., "label": ..., forest or strata keys} overriding the shared settings.
StudyMethod censoring_entry(const json& entry, const json& forest, const json& strata) {
  StudyMethod out;
  json f = forest, s = strata;
  std::string method;
  if (entry.is_string()) {
    method = entry.get<std::string>();
  } else if (entry.is_object()) {
    if (!entry.contains("method")) throw UsageError("config: censoring entry needs a 'method'");
    method = get<std::string>(entry, "method");
    for (const auto& [key, val] : entry.items()) {
      if (key == "method" || key == "label") continue;
      if (f.contains(key)) f[key] = val;
      else if (s.contains(key)) s[key] = val;
      else throw UsageError("config: unknown censoring key '" + key + "'");
    }
  } else {
    throw UsageError("config: censoring entries must be strings or objects");
  }
  out.spec.method = parse_censoring_method(method);
  out.spec.forest = forest_params(f);
  out.spec.strata = strata_spec(s);
  out.label = entry.is_object() && entry.contains("label") ? get<std::string>(entry, "label")
                                                          : std::string(to_string(out.spec.method));
  return out;
}

std::vector<StudyMethod> censoring_entries(const json& cfg, const std::string& key) {
  const json& list = cfg.at(key);
  std::vector<StudyMethod> out;
  if (list.is_string()) {
    for (const auto& name : split_list(list.get<std::string>()))
      out.push_back(censoring_entry(name, cfg.at("forest"), cfg.at("strata")));
  } else if (list.is_array()) {
    for (const auto& e : list) out.push_back(censoring_entry(e, cfg.at("forest"), cfg.at("strata")));
  } else if (list.is_object()) {
    out.push_back(censoring_entry(list, cfg.at("forest"), cfg.at("strata")));
  } else {
    throw UsageError("config: '" + key + "' must be a name, a list or an object");
  }
  if (out.empty()) throw UsageError("at least one censoring method is required");
  return out;
}

std::vector<Approach> approach_list(const json& cfg, const std::string& key) {
  std::vector<Approach> out;
  for (const auto& name : string_list(cfg.at(key), key)) out.push_back(parse_approach(name));
  if (out.empty()) throw UsageError("at least one approach is required");
  return out;
}

void fill_seed(json& cfg, const std::string& section, std::uint64_t seed) {
  if (cfg.at(section).at("seed").is_null()) cfg[section]["seed"] = seed;
}

// ---------------------------------------------------------------------------
// output

fs::path output_dir(const json& cfg) {
  const fs::path dir = get<std::string>(cfg, "out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write '" + path.string() + "'");
  return f;
}

struct RunInfo {
  std::string command;
  std::vector<std::string> args;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

void write_manifest(const fs::path& path, const RunInfo& run, const json& config, const json& seeds,
                    const json& convergence) {
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - run.start).count();
  const json m = {{"command", run.command},     {"arguments", run.args},
                  {"version", DCREG_VERSION},   {"config", config},
                  {"seeds", seeds},             {"wall_clock_seconds", seconds},
                  {"convergence", convergence}};
  open_output(path) << m.dump(2) << '\n';
}

std::string join(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (k) out += ',';
    out += cols[k];
  }
  return out;
}

std::vector<std::string> coefficient_terms(const Dataset& data) { return term_names(data.names()); }

bool any_v_above(const Dataset& data, double t0) {
  for (const auto& r : data.records())
    if (r.v > t0) return true;
  return false;
}

// ---------------------------------------------------------------------------
// fit

struct FitCommand {
  CLI::App* app = nullptr;
  std::string config_path;
  std::unique_ptr<FlagPatch> flags;
};

void setup_fit(CLI::App& root, FitCommand& c) {
  using K = FlagPatch::Kind;
  c.app = root.add_subcommand("fit", "estimate age-specific coefficients on a dataset");
  c.app->add_option("--config", c.config_path, "JSON config; flags given on the command line win");
  c.flags = std::make_unique<FlagPatch>(c.app);
  auto& f = *c.flags;
  f.add("--data", "data", K::Text, "input CSV (u, delta, v, [c,] covariates)");
  f.add("--t0", "t0", K::Text, "analysis ages: start:end:step or a comma list");
  f.add("--approach", "approach", K::Text, "comma list of a, b, im");
  f.add("--censoring", "censoring", K::Text, "comma list of ecdf, km, cox, coxgap, srf");
  f.add("--se", "se", K::Text, "sandwich, bootstrap or both");
  f.add("--level", "level", K::Number, "confidence level of the Wald intervals");
  f.add("--warm-start", "warm_start", K::SetTrue, "start each age from the previous age's estimate");
  f.add("--bootstrap-reps", "bootstrap.replicates", K::Count, "bootstrap replicates");
  f.add("--bootstrap-seed", "bootstrap.seed", K::Count, "bootstrap seed (default: --seed)");
  f.add("--freeze-censoring", "bootstrap.freeze_censoring", K::SetTrue, "reuse the full-data G in every resample");
  add_censoring_flags(f);
  f.add("--seed", "seed", K::Count, "base seed (default: $DCREG_SEED or 1)");
  f.add("--jobs", "jobs", K::Count, "worker threads (0: all cores)");
  f.add("--out", "out", K::Text, "output directory");
}

json fit_defaults() {
  return {{"data", ""},
          {"t0", ""},
          {"approach", "a"},
          {"censoring", "ecdf"},
          {"se", "sandwich"},
          {"level", 0.95},
          {"warm_start", false},
          {"seed", env_seed()},
          {"jobs", 0},
          {"out", "."},
          {"forest", forest_defaults()},
          {"strata", strata_defaults()},
          {"bootstrap", {{"replicates", 1000}, {"seed", nullptr}, {"freeze_censoring", false},
                         {"max_failure_fraction", 0.10}}}};
}

int run_fit(const FitCommand& c, const RunInfo& run, std::ostream& out, std::ostream& err) {
  json cfg = fit_defaults();
  if (!c.config_path.empty()) overlay(cfg, read_json_file(c.config_path), "config");
  c.flags->apply(cfg);
  const std::uint64_t seed = get_count(cfg, "seed");
  fill_seed(cfg, "forest", seed);
  fill_seed(cfg, "bootstrap", seed);

  const auto data_path = get<std::string>(cfg, "data");
  if (data_path.empty()) throw UsageError("--data is required");
  if (cfg.at("t0").is_string() && csv::trim(cfg.at("t0").get<std::string>()).empty())
    throw UsageError("the analysis-age grid is empty; pass --t0 start:end:step");
  const auto grid = age_list(cfg.at("t0"));
  const auto approaches = approach_list(cfg, "approach");
  const auto methods = censoring_entries(cfg, "censoring");
  const SeMethod se = parse_se_method(get<std::string>(cfg, "se"));
  const double level = get<double>(cfg, "level");
  if (!(level > 0.0 && level < 1.0)) throw UsageError("--level must lie in (0, 1)");
  const bool warm = get<bool>(cfg, "warm_start");
  const std::size_t jobs = get_count(cfg, "jobs");
  const json& bcfg = cfg.at("bootstrap");
  BootstrapOptions bopts;
  bopts.replicates = get_count(bcfg, "replicates");
  bopts.seed = get_count(bcfg, "seed");
  bopts.freeze_censoring = get<bool>(bcfg, "freeze_censoring");
  bopts.max_failure_fraction = get<double>(bcfg, "max_failure_fraction");
  bopts.jobs = jobs;
  const bool want_boot = se != SeMethod::Sandwich;

  const Dataset data = read_csv_file(data_path);
  for (const auto& m : methods) {
    if (m.spec.method == CensoringMethod::True)
      throw UsageError("censoring 'true' needs a known censoring law and is only available in simulate");
    if (m.spec.method == CensoringMethod::Forest) m.spec.forest.validate(data.p());
    if (m.spec.method == CensoringMethod::StratifiedEcdf && m.spec.strata.covariate >= data.p())
      throw UsageError("strata covariate index is out of range");
  }
  const auto terms = coefficient_terms(data);
  const fs::path dir = output_dir(cfg);

  std::vector<std::string> header{"approach", "censoring", "t0", "term", "estimate", "se_sandwich"};
  if (want_boot) header.push_back("se_bootstrap");
  for (const char* h : {"ci_lo", "ci_hi", "converged"}) header.push_back(h);
  auto csv_out = open_output(dir / "coefficients.csv");
  csv_out << join(header) << '\n';

  if (std::find(approaches.begin(), approaches.end(), Approach::IM) != approaches.end())
    for (double t0 : grid)
      if (any_v_above(data, t0))
        err << "warning: approach im at age " << num(t0)
            << ": some subjects have V > t0 and the risk-set adjustment is disabled\n";

  json convergence = json::array();
  std::size_t n_converged = 0;
  const double z = normal_quantile(0.5 * (1.0 + level));

  for (const auto& method : methods) {
    const std::string label = method.label;
    CensoringModel g;
    std::string g_error;
    try {
      g = fit_censoring(method.spec, data);
    } catch (const Error& e) {
      g_error = e.what();
      err << "error: censoring fit '" << label << "' failed: " << e.what() << '\n';
    }

    std::vector<std::vector<InferenceSummary>> boot;
    if (want_boot && g_error.empty()) {
      try {
        boot = bootstrap_se_grid(approaches, grid, data, method.spec, bopts);
      } catch (const Error& e) {
        err << "warning: bootstrap for censoring '" << label << "' abandoned: " << e.what() << '\n';
      }
    }

    std::vector<std::optional<Eigen::VectorXd>> previous(approaches.size());
    for (std::size_t t = 0; t < grid.size(); ++t) {
      const double t0 = grid[t];
      std::optional<CensoringValues> cv;
      if (g_error.empty()) {
        try {
          cv = censoring_values(data, g, t0);
        } catch (const Error& e) {
          err << "error: censoring weights at age " << num(t0) << ": " << e.what() << '\n';
        }
      }
      for (std::size_t a = 0; a < approaches.size(); ++a) {
        std::optional<CoefficientEstimate> est;
        Eigen::VectorXd se_sw;
        std::string status = g_error.empty() ? "failed" : "censoring_failed";
        if (cv) {
          try {
            const EstimatingFunction ef(approaches[a], t0, data, *cv);
            SolverOptions opts;
            if (warm && previous[a]) opts.init = previous[a];
            est = solve(ef, opts);
            status = std::string(to_string(est->status));
            for (const auto& w : est->warnings) err << "warning: " << w << '\n';
            if (est->converged) {
              previous[a] = est->theta;
              try {
                se_sw = sandwich_variance(ef, est->theta).se;
              } catch (const Error& e) {
                err << "warning: sandwich variance at age " << num(t0) << ": " << e.what() << '\n';
              }
            }
          } catch (const Error& e) {
            est.reset();
            status = std::string(to_string(e.code()));
            err << "warning: approach " << to_string(approaches[a]) << ", censoring " << label << ", age "
                << num(t0) << ": " << e.what() << '\n';
          }
        }
        const bool ok = est && est->converged;
        n_converged += ok;
        convergence.push_back({{"approach", to_string(approaches[a])},
                               {"censoring", label},
                               {"t0", t0},
                               {"converged", ok},
                               {"status", status},
                               {"iterations", est ? est->iterations : 0}});

        const InferenceSummary* bs = boot.empty() ? nullptr : &boot[a][t];
        for (std::size_t k = 0; k < terms.size(); ++k) {
          const auto ki = static_cast<Eigen::Index>(k);
          constexpr double nan = std::numeric_limits<double>::quiet_NaN();
          const double estimate = ok ? est->theta[ki] : nan;
          const double s_sw = ok && se_sw.size() ? se_sw[ki] : nan;
          const double s_bs = ok && bs ? bs->se[ki] : nan;
          const double s_ci = want_boot ? s_bs : s_sw;
          std::vector<std::string> row{std::string(to_string(approaches[a])), label, num(t0), terms[k],
                                       num(estimate), num(s_sw)};
          if (want_boot) row.push_back(num(s_bs));
          row.push_back(num(estimate - z * s_ci));
          row.push_back(num(estimate + z * s_ci));
          row.push_back(ok ? "1" : "0");
          csv_out << join(row) << '\n';
        }
      }
    }
  }
  csv_out.close();

  write_manifest(dir / "fit.manifest.json", run, cfg,
                 {{"seed", seed}, {"forest", cfg["forest"]["seed"]}, {"bootstrap", cfg["bootstrap"]["seed"]}},
                 convergence);
  out << "wrote " << (dir / "coefficients.csv").string() << '\n';
  if (n_converged == 0) {
    err << "error: no fit converged\n";
    return kExitFitFailure;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateCommand {
  CLI::App* app = nullptr;
  std::string config_path;
  std::vector<std::string> profiles;
  std::unique_ptr<FlagPatch> flags;
};

void setup_simulate(CLI::App& root, SimulateCommand& c) {
  using K = FlagPatch::Kind;
  c.app = root.add_subcommand("simulate", "run a Monte Carlo study on a built-in or configured scenario");
  c.app->add_option("--config", c.config_path, "JSON config; flags given on the command line win");
  c.app->add_option("--profile", c.profiles, "covariate profile z1,z2 for the survival comparison (repeatable)");
  c.flags = std::make_unique<FlagPatch>(c.app);
  auto& f = *c.flags;
  f.add("--preset", "preset", K::Text, "scenario preset: s11, s12, s2, s3");
  f.add("--reps", "reps", K::Count, "replications");
  f.add("--n", "n", K::Count, "subjects per replication");
  f.add("--t0", "t0", K::Text, "analysis ages: start:end:step or a comma list");
  f.add("--generator", "generator", K::Text, "backward or inverse");
  f.add("--methods", "methods", K::Text, "comma list of true, ecdf, km, cox, coxgap, srf");
  f.add("--approaches", "approaches", K::Text, "comma list of a, b, im");
  f.add("--plugin-av", "plugin_av_difference", K::SetTrue, "also average the plug-in variance difference");
  f.add("--compare-generator", "compare_generator", K::SetTrue,
        "rerun with the other generator and write generator_comparison.csv");
  f.add("--no-sandwich", "sandwich", K::SetFalse, "skip sandwich standard errors");
  add_censoring_flags(f);
  f.add("--seed", "seed", K::Count, "base seed (default: scenario seed, else $DCREG_SEED or 1)");
  f.add("--jobs", "jobs", K::Count, "worker threads (0: all cores)");
  f.add("--out", "out", K::Text, "output directory");
}

json simulate_defaults() {
  return {{"preset", "s11"},
          {"scenario", json::object()},
          {"reps", nullptr},
          {"n", nullptr},
          {"t0", nullptr},
          {"generator", nullptr},
          {"seed", nullptr},
          {"methods", "true"},
          {"approaches", "a,b"},
          {"plugin_av_difference", false},
          {"compare_generator", false},
          {"sandwich", true},
          {"profiles", json::array()},
          {"jobs", 0},
          {"out", "."},
          {"forest", forest_defaults()},
          {"strata", strata_defaults()}};
}

void write_metrics(const fs::path& path, const StudyResult& study) {
  const MetricsTable table = compute_metrics(study);
  const bool with_ssd = study.reps >= 2;
  std::vector<std::string> header{"method", "approach", "t0", "term", "truth", "converged", "failed", "smean"};
  if (with_ssd) header.push_back("ssd");
  for (const char* h : {"smese", "rsmse", "coverage"}) header.push_back(h);
  auto f = open_output(path);
  f << join(header) << '\n';
  for (const auto& r : table.rows) {
    std::vector<std::string> row{r.method, std::string(to_string(r.approach)), num(r.t0), r.term, num(r.truth),
                                 std::to_string(r.converged), std::to_string(r.failed), num(r.smean)};
    if (with_ssd) row.push_back(num(r.ssd));
    for (double x : {r.smese, r.rsmse, r.coverage}) row.push_back(num(x));
    f << join(row) << '\n';
  }
}

void write_censoring_rates(const fs::path& path, const StudyResult& study) {
  auto f = open_output(path);
  f << "t0,mean,sd,min,max\n";
  for (const auto& r : censoring_rate_summary(study))
    f << join({num(r.t0), num(r.mean), num(r.sd), num(r.min), num(r.max)}) << '\n';
}

void write_survival(const fs::path& path, const StudyResult& study, const std::vector<std::vector<double>>& profiles) {
  auto f = open_output(path);
  f << "method,approach,t0,profile,mean_pred,mean_se,true_conditional,true_unconditional,abs_error\n";
  for (const auto& r : survival_comparison(study, profiles))
    f << join({r.method, std::string(to_string(r.approach)), num(r.t0), r.profile, num(r.mean_pred), num(r.mean_se),
               num(r.true_conditional), num(r.true_unconditional), num(r.abs_error)})
      << '\n';
}

void write_av_difference(const fs::path& path, const StudyResult& study) {
  auto f = open_output(path);
  f << "method,t0,term,empirical,plugin_mean,plugin_positive\n";
  for (const auto& r : empirical_av_difference(study))
    f << join({r.method, num(r.t0), r.term, num(r.empirical), num(r.plugin_mean), num(r.plugin_positive)}) << '\n';
}

void write_generator_comparison(const fs::path& path, const StudyResult& backward, const StudyResult& inverse) {
  auto f = open_output(path);
  f << "method,approach,t0,backward,inverse,difference\n";
  for (const auto& r : generator_comparison(backward, inverse))
    f << join({r.method, std::string(to_string(r.approach)), num(r.t0), num(r.backward), num(r.inverse),
               num(r.difference)})
      << '\n';
}

json study_convergence(const StudyResult& study) {
  json out = json::array();
  for (std::size_t m = 0; m < study.n_methods(); ++m)
    for (std::size_t a = 0; a < study.n_approaches(); ++a)
      for (std::size_t t = 0; t < study.n_ages(); ++t) {
        std::size_t ok = 0, failed = 0;
        for (std::size_t rep = 0; rep < study.reps; ++rep) {
          const auto& fr = study.fit(rep, m, a, t);
          ok += fr.converged;
          failed += fr.failed;
        }
        out.push_back({{"method", study.spec.methods[m].label},
                       {"approach", to_string(study.spec.approaches[a])},
                       {"t0", study.scenario.t0_grid[t]},
                       {"converged", ok},
                       {"failed", failed},
                       {"reps", study.reps}});
      }
  return out;
}

int run_simulate(const SimulateCommand& c, const RunInfo& run, std::ostream& out, std::ostream& err) {
  json cfg = simulate_defaults();
  if (!c.config_path.empty()) overlay(cfg, read_json_file(c.config_path), "config");
  c.flags->apply(cfg);
  if (!c.profiles.empty()) {
    json list = json::array();
    for (const auto& p : c.profiles) list.push_back(number_list(p, "--profile"));
    cfg["profiles"] = list;
  }

  ScenarioConfig sc = scenario_preset(get<std::string>(cfg, "preset"));
  const json& scenario = cfg.at("scenario");
  if (!scenario.is_object()) throw UsageError("config: 'scenario' must be an object");
  if (!scenario.empty()) apply_scenario_json(sc, scenario);
  if (!cfg["reps"].is_null()) sc.reps = get_count(cfg, "reps");
  if (!cfg["n"].is_null()) sc.n = get_count(cfg, "n");
  if (!cfg["t0"].is_null()) sc.t0_grid = age_list(cfg["t0"]);
  if (!cfg["generator"].is_null()) sc.generator = parse_generator(get<std::string>(cfg, "generator"));
  if (!cfg["seed"].is_null())
    sc.base_seed = get_count(cfg, "seed");
  else if (!scenario.contains("seed") && !scenario.contains("base_seed"))
    sc.base_seed = env_seed();
  sc.validate();

  // Record what was actually run.
  cfg["scenario"] = scenario_to_json(sc);
  cfg["reps"] = sc.reps;
  cfg["n"] = sc.n;
  cfg["t0"] = sc.t0_grid;
  cfg["generator"] = to_string(sc.generator);
  cfg["seed"] = sc.base_seed;
  fill_seed(cfg, "forest", sc.base_seed);

  StudySpec spec;
  spec.approaches = approach_list(cfg, "approaches");
  spec.methods = censoring_entries(cfg, "methods");
  for (const auto& m : spec.methods)
    if (m.spec.method == CensoringMethod::Forest) m.spec.forest.validate(2);
  spec.sandwich = get<bool>(cfg, "sandwich");
  spec.plugin_av_difference = get<bool>(cfg, "plugin_av_difference");
  spec.jobs = get_count(cfg, "jobs");
  const auto profiles = get<std::vector<std::vector<double>>>(cfg, "profiles");
  for (const auto& p : profiles)
    if (p.size() != 2) throw UsageError("profiles need two values (z1, z2)");
  const bool compare = get<bool>(cfg, "compare_generator");
  const fs::path dir = output_dir(cfg);

  if (std::find(spec.approaches.begin(), spec.approaches.end(), Approach::IM) != spec.approaches.end())
    for (double t0 : sc.t0_grid)
      if (sc.v_scale > t0)
        err << "warning: approach im at age " << num(t0)
            << ": subjects with V > t0 are possible and the risk-set adjustment is disabled\n";

  const StudyResult study = run_study(sc, spec);
  write_metrics(dir / "metrics.csv", study);
  write_censoring_rates(dir / "censoring_rates.csv", study);
  write_survival(dir / "survival_comparison.csv", study, profiles);
  std::vector<std::string> written{"metrics.csv", "censoring_rates.csv", "survival_comparison.csv"};
  if (study.approach_index(Approach::A) && study.approach_index(Approach::B)) {
    write_av_difference(dir / "av_difference.csv", study);
    written.push_back("av_difference.csv");
  }
  json seeds = {{"base_seed", sc.base_seed}, {"forest", cfg["forest"]["seed"]}};
  if (compare) {
    ScenarioConfig other = sc;
    other.generator = sc.generator == Generator::Backward ? Generator::Inverse : Generator::Backward;
    const StudyResult second = run_study(other, spec);
    if (sc.generator == Generator::Backward)
      write_generator_comparison(dir / "generator_comparison.csv", study, second);
    else
      write_generator_comparison(dir / "generator_comparison.csv", second, study);
    written.push_back("generator_comparison.csv");
  }
  write_manifest(dir / "simulate.manifest.json", run, cfg, seeds, study_convergence(study));
  for (const auto& w : written) out << "wrote " << (dir / w).string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// smooth

struct SmoothCommand {
  CLI::App* app = nullptr;
  std::string input, output, spans = "0.5";
  int degree = 2;
  std::string value_column = "estimate";
};

void setup_smooth(CLI::App& root, SmoothCommand& c) {
  c.app = root.add_subcommand("smooth", "append LOESS-smoothed coefficient trajectories to a coefficients file");
  c.app->add_option("--input", c.input, "coefficients CSV written by fit")->required();
  c.app->add_option("--output", c.output, "output CSV (default: overwrite the input)");
  c.app->add_option("--spans", c.spans, "comma list of spans in (0, 1]");
  c.app->add_option("--degree", c.degree, "local polynomial degree, 1 or 2");
  c.app->add_option("--column", c.value_column, "column to smooth");
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    return std::nullopt;
  }
};

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw UsageError("'" + path + "' is empty");
  t.header = csv::split(line);
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    auto row = csv::split(line);
    if (row.size() != t.header.size())
      throw UsageError("'" + path + "': row has " + std::to_string(row.size()) + " fields, header has " +
                       std::to_string(t.header.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

double cell_number(const std::string& s, bool allow_na, const std::string& what) {
  if (allow_na && (s == "NA" || s.empty())) return std::numeric_limits<double>::quiet_NaN();
  double x = 0.0;
  if (!csv::parse_double(s, x)) throw UsageError(what + ": '" + s + "' is not a number");
  return x;
}

int run_smooth(const SmoothCommand& c, const RunInfo& run, std::ostream& out, std::ostream& err) {
  const auto spans = number_list(c.spans, "--spans");
  if (spans.empty()) throw UsageError("--spans is empty");
  for (double s : spans)
    if (!(s > 0.0 && s <= 1.0)) throw UsageError("spans must lie in (0, 1]");
  if (c.degree != 1 && c.degree != 2) throw UsageError("--degree must be 1 or 2");

  Table table = read_table(c.input);
  const auto ct0 = table.column("t0");
  const auto cterm = table.column("term");
  const auto cval = table.column(c.value_column);
  if (!ct0 || !cterm || !cval)
    throw UsageError("'" + c.input + "' needs columns t0, term and " + c.value_column);

  // Trajectories are keyed by every label column present.
  std::vector<std::size_t> key_cols;
  for (const char* name : {"approach", "censoring", "method", "term"})
    if (auto k = table.column(name)) key_cols.push_back(*k);
  std::map<std::vector<std::string>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    std::vector<std::string> key;
    for (auto k : key_cols) key.push_back(table.rows[i][k]);
    groups[key].push_back(i);
  }

  for (double span : spans) {
    const std::string name = "smoothed_" + num(span);
    std::size_t col;
    if (auto existing = table.column(name)) {
      col = *existing;
    } else {
      col = table.header.size();
      table.header.push_back(name);
      for (auto& row : table.rows) row.emplace_back();
    }
    for (const auto& [key, rows] : groups) {
      std::vector<std::pair<double, std::size_t>> pts;
      for (auto i : rows) {
        table.rows[i][col] = "NA";
        const double y = cell_number(table.rows[i][*cval], true, c.value_column);
        if (!std::isnan(y)) pts.emplace_back(cell_number(table.rows[i][*ct0], false, "t0"), i);
      }
      std::sort(pts.begin(), pts.end());
      for (std::size_t k = 1; k < pts.size(); ++k)
        if (pts[k].first == pts[k - 1].first)
          throw UsageError("duplicate age " + num(pts[k].first) + " within one trajectory");
      std::vector<double> t, y;
      for (const auto& [age, i] : pts) {
        t.push_back(age);
        y.push_back(cell_number(table.rows[i][*cval], false, c.value_column));
      }
      std::vector<double> fitted;
      try {
        fitted = loess(t, y, SmoothingSpec{span, c.degree});
      } catch (const Error& e) {
        std::string label;
        for (const auto& part : key) label += (label.empty() ? "" : "/") + part;
        err << "warning: " << label << " not smoothed at span " << num(span) << ": " << e.what() << '\n';
        continue;
      }
      for (std::size_t k = 0; k < pts.size(); ++k) table.rows[pts[k].second][col] = num(fitted[k]);
    }
  }

  const fs::path target = c.output.empty() ? fs::path(c.input) : fs::path(c.output);
  {
    auto f = open_output(target);
    f << join(table.header) << '\n';
    for (const auto& row : table.rows) f << join(row) << '\n';
  }
  const json cfg = {{"input", c.input}, {"output", target.string()}, {"spans", spans},
                    {"degree", c.degree}, {"column", c.value_column}};
  const fs::path dir = target.has_parent_path() ? target.parent_path() : fs::path(".");
  write_manifest(dir / "smooth.manifest.json", run, cfg, json::object(), json::array());
  out << "wrote " << target.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// diagnose

struct DiagnoseCommand {
  CLI::App* app = nullptr;
  std::string config_path, theta, coefficients;
  std::unique_ptr<FlagPatch> flags;
};

void setup_diagnose(CLI::App& root, DiagnoseCommand& c) {
  using K = FlagPatch::Kind;
  c.app = root.add_subcommand("diagnose", "plug-in asymptotic-variance difference of approaches A and B");
  c.app->add_option("--config", c.config_path, "JSON config; flags given on the command line win");
  c.app->add_option("--theta", c.theta, "coefficients (intercept first) to evaluate at; single age only");
  c.app->add_option("--coefficients", c.coefficients, "coefficients CSV from fit; approach a rows are used");
  c.flags = std::make_unique<FlagPatch>(c.app);
  auto& f = *c.flags;
  f.add("--data", "data", K::Text, "input CSV (u, delta, v, [c,] covariates)");
  f.add("--t0", "t0", K::Text, "analysis ages: start:end:step or a comma list");
  f.add("--censoring", "censoring", K::Text, "ecdf, km, cox, coxgap or srf");
  add_censoring_flags(f);
  f.add("--seed", "seed", K::Count, "base seed (default: $DCREG_SEED or 1)");
  f.add("--out", "out", K::Text, "output directory");
}

json diagnose_defaults() {
  return {{"data", ""},           {"t0", ""},     {"censoring", "ecdf"},        {"seed", env_seed()},
          {"out", "."},           {"forest", forest_defaults()}, {"strata", strata_defaults()}};
}

// theta per age from a fit's coefficients file.
std::map<double, Eigen::VectorXd> theta_from_file(const std::string& path, const std::string& censoring,
                                                  const std::vector<std::string>& terms) {
  const Table table = read_table(path);
  const auto ct0 = table.column("t0"), cterm = table.column("term"), cest = table.column("estimate");
  if (!ct0 || !cterm || !cest) throw UsageError("'" + path + "' needs columns t0, term and estimate");
  const auto capp = table.column("approach"), ccens = table.column("censoring");
  std::map<double, std::map<std::string, double>> by_age;
  for (const auto& row : table.rows) {
    if (capp && row[*capp] != "a") continue;
    if (ccens && row[*ccens] != censoring) continue;
    by_age[cell_number(row[*ct0], false, "t0")][row[*cterm]] = cell_number(row[*cest], true, "estimate");
  }
  std::map<double, Eigen::VectorXd> out;
  for (const auto& [t0, values] : by_age) {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(terms.size()));
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const auto it = values.find(terms[k]);
      if (it == values.end()) throw UsageError("'" + path + "' lacks term " + terms[k] + " at age " + num(t0));
      theta[static_cast<Eigen::Index>(k)] = it->second;
    }
    out.emplace(t0, theta);
  }
  return out;
}

int run_diagnose(const DiagnoseCommand& c, const RunInfo& run, std::ostream& out, std::ostream& err) {
  json cfg = diagnose_defaults();
  if (!c.config_path.empty()) overlay(cfg, read_json_file(c.config_path), "config");
  c.flags->apply(cfg);
  const std::uint64_t seed = get_count(cfg, "seed");
  fill_seed(cfg, "forest", seed);
  const auto data_path = get<std::string>(cfg, "data");
  if (data_path.empty()) throw UsageError("--data is required");
  if (cfg.at("t0").is_string() && csv::trim(cfg.at("t0").get<std::string>()).empty())
    throw UsageError("the analysis-age grid is empty; pass --t0");
  const auto grid = age_list(cfg.at("t0"));
  const auto methods = censoring_entries(cfg, "censoring");
  if (methods.size() != 1) throw UsageError("diagnose takes exactly one censoring method");
  const StudyMethod& method = methods.front();
  if (method.spec.method == CensoringMethod::True)
    throw UsageError("censoring 'true' is only available in simulate");
  if (!c.theta.empty() && !c.coefficients.empty()) throw UsageError("give --theta or --coefficients, not both");
  if (!c.theta.empty() && grid.size() != 1) throw UsageError("--theta needs a single analysis age");

  const Dataset data = read_csv_file(data_path);
  if (method.spec.method == CensoringMethod::Forest) method.spec.forest.validate(data.p());
  const auto terms = coefficient_terms(data);
  std::map<double, Eigen::VectorXd> given;
  if (!c.theta.empty()) {
    const auto v = number_list(c.theta, "--theta");
    if (v.size() != terms.size())
      throw UsageError("--theta needs " + std::to_string(terms.size()) + " values (intercept and covariates)");
    given.emplace(grid.front(), Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  } else if (!c.coefficients.empty()) {
    given = theta_from_file(c.coefficients, method.label, terms);
  }
  cfg["theta_source"] = !c.theta.empty() ? "theta" : !c.coefficients.empty() ? "coefficients" : "approach_a_fit";

  const fs::path dir = output_dir(cfg);
  const CensoringModel g = fit_censoring(method.spec, data);
  auto matrix = open_output(dir / "av_difference.csv");
  auto diag = open_output(dir / "av_difference_diagonal.csv");
  matrix << "t0,row,col,value\n";
  diag << "t0,term,value,sign\n";
  json convergence = json::array();
  std::size_t done = 0;
  for (double t0 : grid) {
    try {
      const CensoringValues cv = censoring_values(data, g, t0);
      Eigen::VectorXd theta;
      if (given.empty()) {
        const auto est = solve(EstimatingFunction(Approach::A, t0, data, cv));
        convergence.push_back({{"t0", t0}, {"converged", est.converged}, {"status", to_string(est.status)}});
        if (!est.converged) {
          err << "warning: approach a did not converge at age " << num(t0) << '\n';
          continue;
        }
        theta = est.theta;
      } else {
        const auto it = given.find(t0);
        if (it == given.end() || !it->second.allFinite()) {
          err << "warning: no usable coefficients at age " << num(t0) << '\n';
          continue;
        }
        theta = it->second;
      }
      const AvDifference av = av_difference(theta, t0, data, cv);
      for (std::size_t r = 0; r < terms.size(); ++r) {
        for (std::size_t k = 0; k < terms.size(); ++k)
          matrix << join({num(t0), terms[r], terms[k],
                          num(av.diff(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)))})
                 << '\n';
        const double d = av.diff(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r));
        diag << join({num(t0), terms[r], num(d), d > 0.0 ? "positive" : d < 0.0 ? "negative" : "zero"}) << '\n';
      }
      ++done;
    } catch (const Error& e) {
      err << "warning: age " << num(t0) << ": " << e.what() << '\n';
    }
  }
  matrix.close();
  diag.close();
  write_manifest(dir / "diagnose.manifest.json", run, cfg, {{"seed", seed}, {"forest", cfg["forest"]["seed"]}},
                 convergence);
  out << "wrote " << (dir / "av_difference.csv").string() << '\n';
  if (done == 0) {
    err << "error: no age could be diagnosed\n";
    return kExitFitFailure;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Age-specific logistic regression for doubly censored event times", "dcreg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DCREG_VERSION);
  FitCommand fit;
  SimulateCommand simulate;
  SmoothCommand smooth;
  DiagnoseCommand diagnose;
  setup_fit(app, fit);
  setup_simulate(app, simulate);
  setup_smooth(app, smooth);
  setup_diagnose(app, diagnose);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  RunInfo info;
  info.args = args;
  try {
    if (fit.app->parsed()) {
      info.command = "fit";
      return run_fit(fit, info, out, err);
    }
    if (simulate.app->parsed()) {
      info.command = "simulate";
      return run_simulate(simulate, info, out, err);
    }
    if (smooth.app->parsed()) {
      info.command = "smooth";
      return run_smooth(smooth, info, out, err);
    }
    if (diagnose.app->parsed()) {
      info.command = "diagnose";
      return run_diagnose(diagnose, info, out, err);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    const CLI::App* sub = fit.app->parsed()        ? fit.app
                          : simulate.app->parsed() ? simulate.app
                          : smooth.app->parsed()   ? smooth.app
                                                   : diagnose.app;
    err << "run 'dcreg " << sub->get_name() << " --help' for usage\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace dcreg::cli
