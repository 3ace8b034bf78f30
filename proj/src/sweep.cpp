#include "fairssl/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace fairssl {

namespace {

std::string num(double x) {
  if (!std::isfinite(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

double parse_num(const std::string& s) {
  return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

int method_rank(const std::string& m) {
  try {
    return static_cast<int>(parse_method(m));
  } catch (const ConfigError&) {
    return 1000;
  }
}

double setting_value(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) return 0.0;
  try {
    return std::stod(s.substr(eq + 1));
  } catch (const std::exception&) {
    return 0.0;
  }
}

bool row_less(const std::string& d1, const std::string& m1, const std::string& s1, const std::string& d2,
              const std::string& m2, const std::string& s2) {
  if (d1 != d2) return d1 < d2;
  if (method_rank(m1) != method_rank(m2)) return method_rank(m1) < method_rank(m2);
  if (setting_value(s1) != setting_value(s2)) return setting_value(s1) < setting_value(s2);
  return s1 < s2;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct Column {
  const char* name;
  double FrontierRow::*field;
};

const std::vector<Column>& metric_columns() {
  static const std::vector<Column> cols{
      {"macro_f1_mean", &FrontierRow::macro_f1_mean}, {"macro_f1_std", &FrontierRow::macro_f1_std},
      {"micro_f1_mean", &FrontierRow::micro_f1_mean}, {"micro_f1_std", &FrontierRow::micro_f1_std},
      {"dp_mean", &FrontierRow::dp_mean},             {"dp_std", &FrontierRow::dp_std},
      {"eop_mean", &FrontierRow::eop_mean},           {"eop_std", &FrontierRow::eop_std},
      {"eod_mean", &FrontierRow::eod_mean},           {"eod_std", &FrontierRow::eod_std},
      {"binary_dp_mean", &FrontierRow::binary_dp_mean}, {"binary_eod_mean", &FrontierRow::binary_eod_mean},
      {"sat_pct", &FrontierRow::sat_pct},             {"collapse_pct", &FrontierRow::collapse_pct}};
  return cols;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

}  // namespace

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto dots = text.find("..");
  try {
    if (dots != std::string::npos) {
      const std::uint64_t a = std::stoull(text.substr(0, dots));
      const std::uint64_t b = std::stoull(text.substr(dots + 2));
      if (b < a) throw ConfigError("empty seed range '" + text + "'");
      for (std::uint64_t s = a; s <= b; ++s) seeds.push_back(s);
    } else {
      for (const auto& part : split_on(text, ',')) {
        if (!part.empty()) seeds.push_back(std::stoull(part));
      }
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("cannot parse seeds '" + text + "'");
  }
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  return seeds;
}

SweepSpec SweepSpec::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  SweepSpec spec;
  spec.workers = j.value("workers", 1);
  const nlohmann::json base = j.value("base", nlohmann::json::object());
  std::vector<nlohmann::json> datasets;
  if (j.contains("datasets")) {
    for (const auto& d : j.at("datasets")) datasets.push_back(d);
  } else if (base.contains("dataset")) {
    datasets.push_back(base.at("dataset"));
  } else {
    throw ConfigError("sweep needs 'datasets' or base.dataset");
  }
  if (!j.contains("methods")) throw ConfigError("sweep needs a 'methods' list");
  for (const auto& d : datasets) {
    for (const auto& m : j.at("methods")) {
      // A list-valued key in a method entry expands into one setting per value.
      std::vector<nlohmann::json> variants{base};
      variants.front()["dataset"] = d;
      for (const auto& [key, value] : m.items()) {
        std::vector<nlohmann::json> next;
        for (const auto& v : variants) {
          if (value.is_array() && key != "hidden") {
            for (const auto& x : value) {
              auto c = v;
              c[key] = x;
              next.push_back(c);
            }
          } else {
            auto c = v;
            c[key] = value;
            next.push_back(c);
          }
        }
        variants = std::move(next);
      }
      for (const auto& v : variants) spec.settings.push_back(RunConfig::from_json(v, base_dir));
    }
  }
  if (spec.workers < 1) throw ConfigError("workers must be positive");
  return spec;
}

RunSummary summarize(const std::vector<nlohmann::json>& lines) {
  RunSummary s;
  for (const auto& l : lines) {
    if (l.contains("run_id")) {
      s.dataset = l.value("dataset", "");
      s.method = l.value("method", "");
      s.setting = l.value("setting", "");
      s.seed = l.value("seed", std::uint64_t{0});
    } else if (l.contains("epoch")) {
      s.epochs.push_back(l);
    } else if (l.value("final", false)) {
      s.completed = l.value("status", "") == "completed";
      s.test = MetricReport::from_json(l.at("test"));
      s.failures.masking_collapse = l.at("failures").value("masking_collapse", false);
      s.failures.trivial_saturation = l.at("failures").value("trivial_saturation", false);
    }
  }
  return s;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

std::vector<FrontierRow> aggregate(const std::vector<RunSummary>& runs) {
  std::vector<const RunSummary*> sorted;
  for (const auto& r : runs) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const RunSummary* a, const RunSummary* b) {
    if (a->dataset != b->dataset || a->method != b->method || a->setting != b->setting) {
      return row_less(a->dataset, a->method, a->setting, b->dataset, b->method, b->setting);
    }
    return a->seed < b->seed;
  });

  std::vector<FrontierRow> rows;
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    while (j < sorted.size() && sorted[j]->dataset == sorted[i]->dataset &&
           sorted[j]->method == sorted[i]->method && sorted[j]->setting == sorted[i]->setting) {
      ++j;
    }
    FrontierRow row;
    row.dataset = sorted[i]->dataset;
    row.method = sorted[i]->method;
    row.setting = sorted[i]->setting;
    std::vector<double> f1, mi, dp, eop, eod, bdp, beod;
    int sat = 0, collapse = 0;
    for (size_t k = i; k < j; ++k) {
      const RunSummary& r = *sorted[k];
      ++row.runs;
      if (!r.completed) {
        ++row.failed;
        continue;
      }
      f1.push_back(r.test.macro_f1);
      mi.push_back(r.test.micro_f1);
      dp.push_back(r.test.dp_gap);
      eop.push_back(r.test.eop_gap);
      eod.push_back(r.test.eod_gap);
      bdp.push_back(r.test.decomposition.binary_dp);
      beod.push_back(r.test.decomposition.binary_eod);
      sat += r.failures.trivial_saturation ? 1 : 0;
      collapse += r.failures.masking_collapse ? 1 : 0;
    }
    std::tie(row.macro_f1_mean, row.macro_f1_std) = mean_std(f1);
    std::tie(row.micro_f1_mean, row.micro_f1_std) = mean_std(mi);
    std::tie(row.dp_mean, row.dp_std) = mean_std(dp);
    std::tie(row.eop_mean, row.eop_std) = mean_std(eop);
    std::tie(row.eod_mean, row.eod_std) = mean_std(eod);
    row.binary_dp_mean = mean_std(bdp).first;
    row.binary_eod_mean = mean_std(beod).first;
    row.sat_pct = 100.0 * sat / row.runs;
    row.collapse_pct = 100.0 * collapse / row.runs;
    if (f1.size() == 1) row.flags.push_back("single_seed");
    if (row.failed > 0) row.flags.push_back("failed_runs");
    if (row.method == "static") row.flags.push_back("sat_static");
    rows.push_back(std::move(row));
    i = j;
  }
  return rows;
}

std::string render_frontier_csv(const std::vector<FrontierRow>& rows, std::vector<std::string>* warnings) {
  std::vector<const Column*> cols;
  for (const auto& c : metric_columns()) {
    const bool any = std::any_of(rows.begin(), rows.end(), [&](const FrontierRow& r) { return std::isfinite(r.*c.field); });
    if (any) {
      cols.push_back(&c);
    } else if (warnings) {
      warnings->push_back(std::string("column ") + c.name + " omitted: no finite values");
    }
  }
  std::ostringstream out;
  out << "dataset,method,setting,runs,failed";
  for (const auto* c : cols) out << ',' << c->name;
  out << ",flags\n";
  for (const auto& r : rows) {
    out << r.dataset << ',' << r.method << ',' << r.setting << ',' << r.runs << ',' << r.failed;
    for (const auto* c : cols) out << ',' << num(r.*c->field);
    out << ',' << join(r.flags, ";") << '\n';
  }
  return out.str();
}

std::vector<FrontierRow> parse_frontier_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split_on(line, ',');
  std::vector<FrontierRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_on(line, ',');
    if (cells.size() != header.size()) throw std::runtime_error("frontier.csv: ragged row");
    FrontierRow r;
    for (size_t i = 0; i < header.size(); ++i) {
      const std::string& h = header[i];
      const std::string& v = cells[i];
      if (h == "dataset") r.dataset = v;
      else if (h == "method") r.method = v;
      else if (h == "setting") r.setting = v;
      else if (h == "runs") r.runs = std::stoi(v);
      else if (h == "failed") r.failed = std::stoi(v);
      else if (h == "flags") {
        if (!v.empty()) r.flags = split_on(v, ';');
      } else {
        for (const auto& c : metric_columns()) {
          if (h == c.name) r.*c.field = parse_num(v);
        }
      }
    }
    rows.push_back(std::move(r));
  }
  // Columns absent from the file stay absent on re-render.
  for (const auto& c : metric_columns()) {
    if (std::find(header.begin(), header.end(), c.name) == header.end()) {
      for (auto& r : rows) r.*c.field = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return rows;
}

std::string render_trajectories_csv(const std::vector<RunSummary>& runs) {
  std::vector<const RunSummary*> sorted;
  for (const auto& r : runs) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const RunSummary* a, const RunSummary* b) {
    if (a->dataset != b->dataset || a->method != b->method || a->setting != b->setting) {
      return row_less(a->dataset, a->method, a->setting, b->dataset, b->method, b->setting);
    }
    return a->seed < b->seed;
  });
  std::ostringstream out;
  out << "dataset,method,setting,seed,epoch,q_t,p_t,ESS_t,v_t,H_t,r_t,B,pi,lambda_v,lambda_h\n";
  for (const auto* r : sorted) {
    for (const auto& e : r->epochs) {
      const auto& c = e.value("controller", nlohmann::json::object());
      const bool opda = c.contains("B");
      out << r->dataset << ',' << r->method << ',' << r->setting << ',' << r->seed << ',' << e.at("epoch").get<int>()
          << ',' << num(e.at("q_t").get<double>()) << ',' << num(e.at("p_t").get<double>()) << ','
          << num(e.at("ESS_t").get<double>()) << ',' << num(e.at("v_t").get<double>()) << ','
          << num(e.at("H_t").get<double>()) << ',' << num(e.at("r_t").get<double>()) << ','
          << (opda ? num(c.at("B").get<double>()) : "") << ',' << (opda ? num(c.at("pi").get<double>()) : "") << ','
          << num(e.at("lambda_v").get<double>()) << ',' << num(e.at("lambda_h").get<double>()) << '\n';
    }
  }
  return out.str();
}

std::string render_summary(const std::vector<FrontierRow>& rows, const std::vector<std::uint64_t>& seeds,
                           const std::vector<RunSummary>& runs, const std::vector<std::string>& warnings) {
  std::ostringstream out;
  out << "seeds:";
  for (auto s : seeds) out << ' ' << s;
  out << "\nruns: " << runs.size() << "\n\n";
  auto pm = [](double m, double s) {
    if (!std::isfinite(m)) return std::string("-");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f +- %.4f", m, s);
    return std::string(buf);
  };
  size_t wd = 8, wm = 7, ws = 8;
  for (const auto& r : rows) {
    wd = std::max(wd, r.dataset.size() + 2);
    wm = std::max(wm, r.method.size() + 2);
    ws = std::max(ws, r.setting.size() + 2);
  }
  const int dw = static_cast<int>(wd), mw = static_cast<int>(wm), sw = static_cast<int>(ws);
  out << std::left << std::setw(dw) << "dataset" << std::setw(mw) << "method" << std::setw(sw) << "setting"
      << std::setw(20) << "Macro-F1" << std::setw(20) << "Micro-F1" << std::setw(20) << "DP" << std::setw(20)
      << "EOp" << std::setw(8) << "Sat.%" << std::setw(10) << "Coll.%" << "flags\n";
  for (const auto& r : rows) {
    char sat[16], coll[16];
    std::snprintf(sat, sizeof sat, "%.0f", r.sat_pct);
    std::snprintf(coll, sizeof coll, "%.0f", r.collapse_pct);
    out << std::setw(dw) << r.dataset << std::setw(mw) << r.method << std::setw(sw) << r.setting << std::setw(20)
        << pm(r.macro_f1_mean, r.macro_f1_std) << std::setw(20) << pm(r.micro_f1_mean, r.micro_f1_std)
        << std::setw(20) << pm(r.dp_mean, r.dp_std) << std::setw(20) << pm(r.eop_mean, r.eop_std) << std::setw(8)
        << sat << std::setw(10) << coll << join(r.flags, ";") << '\n';
  }
  std::vector<std::string> failed;
  for (const auto& r : runs) {
    if (!r.completed) failed.push_back(r.dataset + "/" + r.method + "/" + r.setting + "/s" + std::to_string(r.seed));
  }
  std::sort(failed.begin(), failed.end());
  if (!failed.empty()) out << "\nfailed runs: " << join(failed, ", ") << '\n';
  for (const auto& w : warnings) out << "warning: " << w << '\n';
  return out.str();
}

Rendered render(const std::vector<RunSummary>& runs) {
  Rendered r;
  const auto rows = aggregate(runs);
  r.frontier_csv = render_frontier_csv(rows, &r.warnings);
  r.trajectories_csv = render_trajectories_csv(runs);
  std::set<std::uint64_t> seeds;
  for (const auto& run : runs) seeds.insert(run.seed);
  r.summary_txt = render_summary(rows, {seeds.begin(), seeds.end()}, runs, r.warnings);
  return r;
}

namespace {

void write_reports(const std::filesystem::path& dir, const std::vector<RunSummary>& runs) {
  const Rendered r = render(runs);
  write_text(dir / "frontier.csv", r.frontier_csv);
  write_text(dir / "trajectories.csv", r.trajectories_csv);
  write_text(dir / "summary.txt", r.summary_txt);
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec, const std::vector<std::uint64_t>& seeds,
                      const std::filesystem::path& out_dir) {
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  const auto runs_dir = out_dir / "runs";
  std::filesystem::create_directories(runs_dir);

  // Each distinct dataset spec is prepared once and shared read-only.
  std::map<std::string, TabularDataset> datasets;
  for (const auto& s : spec.settings) {
    const std::string key = s.dataset.to_json().dump();
    if (!datasets.count(key)) datasets.emplace(key, prepare_dataset(s.dataset));
  }

  std::vector<RunConfig> jobs;
  for (const auto& s : spec.settings) {
    for (auto seed : seeds) {
      RunConfig c = s;
      c.seed = seed;
      c.out_dir = runs_dir;
      jobs.push_back(c);
    }
  }

  std::vector<RunSummary> results(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < jobs.size(); i = next++) {
      const RunConfig& c = jobs[i];
      RunResult r;
      try {
        r = train_run(c, datasets.at(c.dataset.to_json().dump()));
      } catch (const std::exception& e) {
        r.completed = false;
        r.error = e.what();
      }
      RunSummary s = summarize(r.lines);
      s.dataset = c.dataset.name;
      s.method = method_name(c.method);
      s.setting = c.setting();
      s.seed = c.seed;
      results[i] = std::move(s);
    }
  };
  const int n = std::max(1, std::min<int>(spec.workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  nlohmann::json manifest{{"seeds", seeds}, {"workers", spec.workers}, {"runs", nlohmann::json::array()}};
  for (const auto& c : jobs) manifest["runs"].push_back(c.run_id());
  write_text(out_dir / "sweep.json", manifest.dump(2) + "\n");
  write_reports(out_dir, results);
  return {results, aggregate(results)};
}

SweepResult report(const std::filesystem::path& dir) {
  const auto runs_dir = dir / "runs";
  if (!std::filesystem::is_directory(runs_dir)) throw ConfigError("no runs/ directory under " + dir.string());
  std::vector<std::filesystem::path> logs;
  for (const auto& e : std::filesystem::directory_iterator(runs_dir)) {
    if (e.path().extension() == ".jsonl") logs.push_back(e.path());
  }
  if (logs.empty()) throw ConfigError("no run logs under " + runs_dir.string());
  std::sort(logs.begin(), logs.end());
  std::vector<RunSummary> runs;
  for (const auto& p : logs) runs.push_back(summarize(read_jsonl(p)));
  write_reports(dir, runs);
  return {runs, aggregate(runs)};
}

}  // namespace fairssl
