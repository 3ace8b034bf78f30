#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairssl/trainer.hpp"

namespace fairssl {

/// Parses "a..b" (inclusive) or a comma-separated list.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

struct SweepSpec {
  std::vector<RunConfig> settings;  // one per (dataset, method, setting); seed is filled per run
  int workers = 1;

  /// Expands {"base": {...}, "datasets": [...], "methods": [{"method": "static", "lambda": [..]}, ...]}.
  static SweepSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

/// Outcome of one finished or failed run, as recovered from its log.
struct RunSummary {
  std::string dataset, method, setting;
  std::uint64_t seed = 0;
  bool completed = false;
  MetricReport test;
  FailureFlags failures;
  std::vector<nlohmann::json> epochs;
};

RunSummary summarize(const std::vector<nlohmann::json>& lines);

struct FrontierRow {
  std::string dataset, method, setting;
  int runs = 0;
  int failed = 0;
  double macro_f1_mean = 0, macro_f1_std = 0;
  double micro_f1_mean = 0, micro_f1_std = 0;
  double dp_mean = 0, dp_std = 0;
  double eop_mean = 0, eop_std = 0;
  double eod_mean = 0, eod_std = 0;
  double binary_dp_mean = 0, binary_eod_mean = 0;
  double sat_pct = 0;
  double collapse_pct = 0;
  std::vector<std::string> flags;
};

/// Sample mean and (n - 1) standard deviation; std is 0 for a single value.
std::pair<double, double> mean_std(const std::vector<double>& xs);

/// Groups runs by (dataset, method, setting) in a deterministic order.
std::vector<FrontierRow> aggregate(const std::vector<RunSummary>& runs);

struct Rendered {
  std::string frontier_csv;
  std::string trajectories_csv;
  std::string summary_txt;
  std::vector<std::string> warnings;
};

std::string render_frontier_csv(const std::vector<FrontierRow>& rows, std::vector<std::string>* warnings = nullptr);
std::vector<FrontierRow> parse_frontier_csv(const std::string& text);
std::string render_trajectories_csv(const std::vector<RunSummary>& runs);
std::string render_summary(const std::vector<FrontierRow>& rows, const std::vector<std::uint64_t>& seeds,
                           const std::vector<RunSummary>& runs, const std::vector<std::string>& warnings);
Rendered render(const std::vector<RunSummary>& runs);

struct SweepResult {
  std::vector<RunSummary> runs;
  std::vector<FrontierRow> frontier;
};

/// Runs every setting for every seed on a pool of workers and writes logs plus reports under out_dir.
SweepResult run_sweep(const SweepSpec& spec, const std::vector<std::uint64_t>& seeds,
                      const std::filesystem::path& out_dir);

/// Re-renders frontier.csv, trajectories.csv and summary.txt from the run logs under dir.
SweepResult report(const std::filesystem::path& dir);

}  // namespace fairssl
