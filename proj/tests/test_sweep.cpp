#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fairssl/sweep.hpp"

using namespace fairssl;
namespace fs = std::filesystem;

namespace {

RunSummary fake_run(const std::string& method, const std::string& setting, std::uint64_t seed, double f1, double dp) {
  RunSummary r;
  r.dataset = "toy";
  r.method = method;
  r.setting = setting;
  r.seed = seed;
  r.completed = true;
  r.test.macro_f1 = f1;
  r.test.micro_f1 = f1;
  r.test.dp_gap = dp;
  r.test.eop_gap = dp;
  r.test.eod_gap = dp;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json tiny_sweep() {
  return nlohmann::json::parse(R"({
    "base": {
      "dataset": {"name": "tiny", "data_seed": 3, "split_seed": 4, "fractions": {"labeled": 0.1, "unlabeled": 0.7, "validation": 0.1, "test": 0.1},
                  "synthetic": {"n": 600, "d": 4, "K": 2, "L": 2, "group_mean_shift": 1.5,
                                "group_proportions": [0.7, 0.3], "prevalence": [[0.5, 0.4], [0.2, 0.3]]}},
      "hidden": [8], "epochs": 4, "lr": 0.01, "batch_labeled": 16, "batch_unlabeled": 64, "tau": 0.7,
      "opda": {"warmup": 2}
    },
    "methods": [{"method": "static", "lambda": [10, 1]}, {"method": "base"}, {"method": "opda"}]
  })");
}

}  // namespace

TEST_CASE("mean and sample standard deviation") {
  const auto [m, s] = mean_std({1.0, 2.0, 4.0});
  CHECK(std::abs(m - 7.0 / 3.0) < 1e-15);
  // squared deviations 16/9, 1/9, 25/9 over n - 1 = 2
  CHECK(std::abs(s - std::sqrt(21.0 / 9.0)) < 1e-15);
  CHECK(mean_std({5.0}).second == 0.0);
  CHECK(std::isnan(mean_std({}).first));
}

TEST_CASE("seed lists and ranges") {
  CHECK(parse_seeds("0..2") == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(parse_seeds("7,3") == std::vector<std::uint64_t>{7, 3});
  CHECK_THROWS_AS(parse_seeds("3..1"), ConfigError);
  CHECK_THROWS_AS(parse_seeds("x"), ConfigError);
  CHECK_THROWS_AS(parse_seeds(""), ConfigError);
}

TEST_CASE("aggregation order, flags and seed-order invariance") {
  std::vector<RunSummary> runs{fake_run("opda", "default", 1, 0.6, 0.1), fake_run("static", "lambda=10", 0, 0.4, 0.2),
                               fake_run("static", "lambda=1", 0, 0.5, 0.3), fake_run("opda", "default", 0, 0.8, 0.3),
                               fake_run("base", "default", 0, 0.7, 0.5)};
  runs[0].failures.trivial_saturation = true;
  const auto rows = aggregate(runs);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].method == "base");
  CHECK(rows[1].setting == "lambda=1");
  CHECK(rows[2].setting == "lambda=10");
  CHECK(rows[3].method == "opda");
  CHECK(rows[3].runs == 2);
  CHECK(std::abs(rows[3].macro_f1_mean - 0.7) < 1e-15);
  CHECK(std::abs(rows[3].sat_pct - 50.0) < 1e-12);
  CHECK(rows[3].flags.empty());
  CHECK(rows[0].flags == std::vector<std::string>{"single_seed"});
  CHECK(std::find(rows[1].flags.begin(), rows[1].flags.end(), "sat_static") != rows[1].flags.end());

  std::reverse(runs.begin(), runs.end());
  CHECK(render(runs).frontier_csv == render_frontier_csv(rows));

  runs[0].completed = false;
  const auto with_failure = aggregate(runs);
  for (const auto& r : with_failure) {
    if (r.method == "base") CHECK(r.failed == 1);
  }
}

TEST_CASE("frontier csv survives a parse and re-render") {
  std::vector<RunSummary> runs{fake_run("base", "default", 0, 0.7, 0.5), fake_run("base", "default", 1, 0.65, 0.45),
                               fake_run("pi", "f=0.1", 0, 0.5, 0.2)};
  std::vector<std::string> warnings;
  const std::string csv = render_frontier_csv(aggregate(runs), &warnings);
  CHECK(render_frontier_csv(parse_frontier_csv(csv)) == csv);
  CHECK(csv.find("single_seed") != std::string::npos);
}

TEST_CASE("sweep reports are reproducible from the logs") {
  const fs::path dir = fs::temp_directory_path() / "fairssl_sweep_test";
  fs::remove_all(dir);
  const auto spec = SweepSpec::from_json(tiny_sweep());
  REQUIRE(spec.settings.size() == 4);
  const auto res = run_sweep(spec, {0, 1}, dir);
  CHECK(res.runs.size() == 8);
  for (const auto& r : res.runs) CHECK(r.completed);
  const std::string frontier = slurp(dir / "frontier.csv");
  const std::string traj = slurp(dir / "trajectories.csv");
  const std::string summary = slurp(dir / "summary.txt");
  CHECK(summary.rfind("seeds: 0 1\n", 0) == 0);

  report(dir);
  CHECK(slurp(dir / "frontier.csv") == frontier);
  CHECK(slurp(dir / "trajectories.csv") == traj);
  CHECK(slurp(dir / "summary.txt") == summary);
  report(dir);
  CHECK(slurp(dir / "frontier.csv") == frontier);

  // the same sweep with seeds listed the other way round writes the same frontier
  const fs::path dir2 = fs::temp_directory_path() / "fairssl_sweep_test2";
  fs::remove_all(dir2);
  run_sweep(spec, {1, 0}, dir2);
  CHECK(slurp(dir2 / "frontier.csv") == frontier);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("sweep spec validation") {
  auto j = tiny_sweep();
  j.erase("methods");
  CHECK_THROWS_AS(SweepSpec::from_json(j), ConfigError);
  j = tiny_sweep();
  j["base"].erase("dataset");
  CHECK_THROWS_AS(SweepSpec::from_json(j), ConfigError);
  j = tiny_sweep();
  j["workers"] = 0;
  CHECK_THROWS_AS(SweepSpec::from_json(j), ConfigError);
  CHECK_THROWS_AS(report(fs::temp_directory_path() / "fairssl_no_such_dir"), ConfigError);
}

TEST_CASE("shipped configs parse") {
  const fs::path dir = FAIRSSL_CONFIGS;
  auto load = [&](const char* name) {
    std::ifstream in(dir / name);
    REQUIRE(in);
    return nlohmann::json::parse(in);
  };
  const auto frontier = SweepSpec::from_json(load("frontier_sweep.json"), dir);
  CHECK(frontier.settings.size() == 1 + 12 + 1 + 2 + 1 + 2);
  const auto run = RunConfig::from_json(load("run_opda.json"), dir);
  CHECK(run.dataset.synth->K == 3);
  CHECK(run.dataset.synth->n == 10000);
  const auto acc = load("acceptance.json");
  CHECK(acc["static_grid"].size() == 12);
  auto probe = acc["base"];
  probe["dataset"] = acc["second_synthetic"];
  CHECK(RunConfig::from_json(probe, dir).dataset.synth->K == 2);
}
