#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fairssl/sweep.hpp"
#include "fairssl/trainer.hpp"
#include "fairssl/verify.hpp"

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fairssl::ConfigError("cannot open " + path);
  return nlohmann::json::parse(in);
}

int cmd_run(const std::string& config_path, const std::string& out) {
  const std::filesystem::path cfg_path(config_path);
  fairssl::RunConfig cfg = fairssl::RunConfig::from_json(read_json(config_path), cfg_path.parent_path());
  if (!out.empty()) cfg.out_dir = out;
  const fairssl::RunResult r = fairssl::train_run(cfg);
  if (!r.completed) {
    std::cerr << "run failed: " << r.error << "\n";
    return 2;
  }
  std::cout << r.lines.back().dump(2) << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& seeds, const std::string& out, int workers) {
  const std::filesystem::path cfg_path(config_path);
  fairssl::SweepSpec spec = fairssl::SweepSpec::from_json(read_json(config_path), cfg_path.parent_path());
  if (workers > 0) spec.workers = workers;
  const auto result = fairssl::run_sweep(spec, fairssl::parse_seeds(seeds), out);
  std::ifstream summary(std::filesystem::path(out) / "summary.txt");
  std::cout << summary.rdbuf();
  int failed = 0;
  for (const auto& r : result.runs) failed += r.completed ? 0 : 1;
  return failed == 0 ? 0 : 3;
}

int cmd_report(const std::string& in) {
  fairssl::report(in);
  std::ifstream summary(std::filesystem::path(in) / "summary.txt");
  std::cout << summary.rdbuf();
  return 0;
}

int cmd_bench_regret() {
  const auto curve = fairssl::quadratic_regret({100, 1000, 10000});
  std::printf("loss_1(u_1) = %.6g\n", curve.first_loss);
  std::printf("%8s %14s %14s\n", "T", "Regret(T)", "Regret(T)/T");
  for (const auto& p : curve.points) std::printf("%8d %14.6g %14.6g\n", p.horizon, p.regret, p.average);
  return 0;
}

int cmd_verify() {
  bool ok = true;
  for (const auto& c : fairssl::verify_all()) {
    std::printf("%s  %s  (%s)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    ok &= c.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair semi-supervised training with dual-weight control"};
  app.require_subcommand(1);

  std::string run_config, run_out;
  auto* run = app.add_subcommand("run", "Train one run from a JSON config");
  run->add_option("--config", run_config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "Override the log directory");

  std::string sweep_config, sweep_seeds = "0..2", sweep_out;
  int workers = 0;
  auto* sweep = app.add_subcommand("sweep", "Run a grid of settings over seeds");
  sweep->add_option("--config", sweep_config, "Sweep config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--seeds", sweep_seeds, "Seed range a..b or list a,b,c");
  sweep->add_option("--out", sweep_out, "Output directory")->required();
  sweep->add_option("--workers", workers, "Parallel runs (overrides the config)");

  std::string report_in;
  auto* rep = app.add_subcommand("report", "Re-render reports from a sweep directory");
  rep->add_option("--in", report_in, "Sweep output directory")->required()->check(CLI::ExistingDirectory);

  auto* bench = app.add_subcommand("bench-regret", "Regret of the log-budget step on a stationary quadratic");
  auto* verify = app.add_subcommand("verify", "Run the controller and loss property suite");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_config, run_out);
    if (*sweep) return cmd_sweep(sweep_config, sweep_seeds, sweep_out, workers);
    if (*rep) return cmd_report(report_in);
    if (*bench) return cmd_bench_regret();
    if (*verify) return cmd_verify();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
