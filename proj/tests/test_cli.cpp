#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "dcreg/csv.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = dcreg::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(DCREG_SCRATCH) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE_MESSAGE(in.good(), "cannot open " << p.string());
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) rows.push_back(dcreg::csv::split(line));
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  REQUIRE_MESSAGE(it != header.end(), "missing column " << name);
  return static_cast<std::size_t>(it - header.begin());
}

// Headers must match exactly; numeric cells to 1e-8 relative, text cells exactly.
// DCREG_UPDATE_GOLDEN=1 rewrites the golden file instead.
void check_golden(const fs::path& produced, const std::string& golden_name) {
  const fs::path golden = fs::path(DCREG_GOLDEN) / golden_name;
  if (const char* up = std::getenv("DCREG_UPDATE_GOLDEN"); up && std::string(up) == "1") {
    fs::copy_file(produced, golden, fs::copy_options::overwrite_existing);
    return;
  }
  const auto got = read_rows(produced), want = read_rows(golden);
  REQUIRE(got.size() == want.size());
  REQUIRE(got[0] == want[0]);
  for (std::size_t i = 1; i < got.size(); ++i) {
    REQUIRE(got[i].size() == want[i].size());
    for (std::size_t j = 0; j < got[i].size(); ++j) {
      double a = 0.0, b = 0.0;
      if (dcreg::csv::parse_double(got[i][j], a) && dcreg::csv::parse_double(want[i][j], b)) {
        CHECK_MESSAGE(std::abs(a - b) <= 1e-8 * std::max(1.0, std::abs(b)),
                      golden_name << " row " << i << " column " << want[0][j] << ": " << a << " vs " << b);
      } else {
        CHECK_MESSAGE(got[i][j] == want[i][j], golden_name << " row " << i << " column " << want[0][j]);
      }
    }
  }
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("fit matches its golden output") {
  const auto dir = scratch("fit_golden");
  const auto r = run({"fit", "--data", testing::data_path("small.csv"), "--t0", "25,30,35", "--approach", "a,b",
                      "--censoring", "ecdf,cox", "--seed", "3", "--out", dir.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  check_golden(dir / "coefficients.csv", "fit_coefficients.csv");
  const auto m = read_json(dir / "fit.manifest.json");
  CHECK(m.at("command") == "fit");
  CHECK(m.contains("version"));
  CHECK(m.contains("config"));
  CHECK(m.contains("seeds"));
  CHECK(m.contains("wall_clock_seconds"));
  CHECK(m.contains("convergence"));
}

TEST_CASE("simulate matches its golden output") {
  const auto dir = scratch("sim_golden");
  const auto r = run({"simulate", "--preset", "s11", "--n", "600", "--reps", "3", "--t0", "30,40", "--seed", "11",
                      "--jobs", "2", "--out", dir.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  check_golden(dir / "metrics.csv", "simulate_metrics.csv");
  check_golden(dir / "censoring_rates.csv", "simulate_censoring_rates.csv");
  CHECK(fs::exists(dir / "survival_comparison.csv"));
  CHECK(fs::exists(dir / "av_difference.csv"));
  CHECK(fs::exists(dir / "simulate.manifest.json"));
}

TEST_CASE("smooth adds one column per span") {
  const auto dir = scratch("smooth");
  REQUIRE(run({"fit", "--data", testing::data_path("small.csv"), "--t0", "20:40:1", "--out", dir.string()}).code == 0);
  const auto r = run({"smooth", "--input", (dir / "coefficients.csv").string(), "--output",
                      (dir / "smoothed.csv").string(), "--spans", "0.3,0.5,0.8"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = read_rows(dir / "smoothed.csv");
  const auto& h = rows[0];
  CHECK(h.size() == read_rows(dir / "coefficients.csv")[0].size() + 3);
  for (const char* name : {"smoothed_0.3", "smoothed_0.5", "smoothed_0.8"}) column(h, name);
  CHECK(fs::exists(dir / "smooth.manifest.json"));

  // replacing in place keeps the column set
  REQUIRE(run({"smooth", "--input", (dir / "smoothed.csv").string(), "--spans", "0.5"}).code == 0);
  CHECK(read_rows(dir / "smoothed.csv")[0].size() == h.size());

  std::ofstream(dir / "bad.csv") << "a,b\n1,2\n";
  CHECK(run({"smooth", "--input", (dir / "bad.csv").string()}).code == 2);
}

TEST_CASE("exit codes and usage errors") {
  const auto dir = scratch("errors");
  CHECK(run({}).code == 2);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"--version"}).code == 0);

  const auto empty = run({"fit", "--data", testing::data_path("small.csv"), "--t0", "", "--out", dir.string()});
  CHECK(empty.code == 2);
  CHECK(empty.err.find("--t0") != std::string::npos);
  CHECK(run({"fit", "--data", (dir / "missing.csv").string(), "--t0", "30", "--out", dir.string()}).code == 2);
  CHECK(run({"fit", "--data", testing::data_path("small.csv"), "--t0", "30", "--approach", "z",
             "--out", dir.string()}).code == 2);
  CHECK(run({"fit", "--data", testing::data_path("small.csv"), "--t0", "30", "--censoring", "true",
             "--out", dir.string()}).code == 2);
  CHECK(run({"simulate", "--preset", "s9", "--out", dir.string()}).code == 2);

  // nobody is at risk before every initial event: no age can be fitted
  CHECK(run({"fit", "--data", testing::data_path("small.csv"), "--t0", "0.001", "--out", dir.string()}).code == 3);
}

TEST_CASE("fit warns when approach IM sees subjects not yet at risk") {
  const auto dir = scratch("im_warning");
  const auto r = run({"fit", "--data", testing::data_path("small.csv"), "--t0", "15", "--approach", "im",
                      "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("approach im") != std::string::npos);
  const auto quiet = run({"fit", "--data", testing::data_path("small.csv"), "--t0", "15", "--approach", "a",
                          "--out", dir.string()});
  CHECK(quiet.err.find("approach im") == std::string::npos);
}

TEST_CASE("bootstrap columns") {
  const auto dir = scratch("bootstrap");
  const auto r = run({"fit", "--data", testing::data_path("small_noc.csv"), "--t0", "30", "--se", "both",
                      "--bootstrap-reps", "40", "--out", dir.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = read_rows(dir / "coefficients.csv");
  const auto c = column(rows[0], "se_bootstrap");
  CHECK(column(rows[0], "se_sandwich") < c);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::stod(rows[i][c]) > 0.0);
}

TEST_CASE("a single replication drops the SSD column") {
  const auto dir = scratch("one_rep");
  REQUIRE(run({"simulate", "--n", "500", "--reps", "1", "--t0", "30", "--out", dir.string()}).code == 0);
  const auto h = read_rows(dir / "metrics.csv")[0];
  CHECK(std::find(h.begin(), h.end(), "ssd") == h.end());
  column(h, "smese");
}

TEST_CASE("diagnose on uncensored data reports zero differences") {
  const auto dir = scratch("diagnose");
  const auto r = run({"diagnose", "--data", testing::data_path("uncensored.csv"), "--t0", "25,30", "--censoring",
                      "km", "--out", dir.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = read_rows(dir / "av_difference_diagonal.csv");
  REQUIRE(rows.size() == 1 + 2 * 3);
  const auto cv = column(rows[0], "value"), cs = column(rows[0], "sign");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::stod(rows[i][cv]) == 0.0);
    CHECK(rows[i][cs] == "zero");
  }
  CHECK(read_rows(dir / "av_difference.csv").size() == 1 + 2 * 9);
  CHECK(fs::exists(dir / "diagnose.manifest.json"));

  CHECK(run({"diagnose", "--data", testing::data_path("small.csv"), "--t0", "30", "--theta", "0,0,0",
             "--out", dir.string()}).code == 0);
  CHECK(run({"diagnose", "--data", testing::data_path("small.csv"), "--t0", "30", "--theta", "0,0",
             "--out", dir.string()}).code == 2);
}

TEST_CASE("command-line flags override the config file") {
  const auto dir = scratch("config");
  const auto cfg_path = dir / "cfg.json";
  std::ofstream(cfg_path) << nlohmann::json{{"data", testing::data_path("small.csv")},
                                            {"t0", "25,30"},
                                            {"approach", "b"},
                                            {"out", dir.string()}}.dump();
  REQUIRE(run({"fit", "--config", cfg_path.string()}).code == 0);
  auto rows = read_rows(dir / "coefficients.csv");
  CHECK(rows.size() == 1 + 2 * 3);
  CHECK(rows[1][column(rows[0], "approach")] == "b");

  REQUIRE(run({"fit", "--config", cfg_path.string(), "--approach", "a", "--t0", "30"}).code == 0);
  rows = read_rows(dir / "coefficients.csv");
  CHECK(rows.size() == 1 + 3);
  CHECK(rows[1][column(rows[0], "approach")] == "a");

  std::ofstream(cfg_path) << nlohmann::json{{"datta", "x"}}.dump();
  CHECK(run({"fit", "--config", cfg_path.string()}).code == 2);
}

TEST_CASE("DCREG_SEED sets the default seed") {
  const auto dir = scratch("env_seed");
  ::setenv("DCREG_SEED", "4242", 1);
  const auto r = run({"simulate", "--n", "300", "--reps", "1", "--t0", "30", "--out", dir.string()});
  ::unsetenv("DCREG_SEED");
  REQUIRE(r.code == 0);
  const auto seeds = read_json(dir / "simulate.manifest.json").at("seeds");
  CHECK(seeds.dump().find("4242") != std::string::npos);

  const auto again = scratch("env_seed_flag");
  ::setenv("DCREG_SEED", "4242", 1);
  REQUIRE(run({"simulate", "--n", "300", "--reps", "1", "--t0", "30", "--seed", "9", "--out", again.string()}).code == 0);
  ::unsetenv("DCREG_SEED");
  CHECK(read_json(again / "simulate.manifest.json").at("seeds").dump().find("4242") == std::string::npos);
}

}  // TEST_SUITE
