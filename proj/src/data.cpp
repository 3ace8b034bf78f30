#include "fairssl/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fairssl {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

// RFC-4180-ish: double quotes group fields, "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool is_missing(const std::string& v) {
  return v.empty() || v == "?" || v == "NA" || v == "NaN" || v == "nan";
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

FeatureKind parse_kind(const std::string& s) {
  if (s == "continuous") return FeatureKind::kContinuous;
  if (s == "categorical") return FeatureKind::kCategorical;
  throw SchemaError("unknown feature kind '" + s + "'");
}

LabelEncoding parse_encoding(const std::string& s) {
  if (s == "binary") return LabelEncoding::kBinary;
  if (s == "one-hot") return LabelEncoding::kOneHot;
  throw SchemaError("unknown label encoding '" + s + "'");
}

// Numeric-looking vocabularies sort numerically so that e.g. RAC1P 1..9 maps in order.
std::vector<std::string> sorted_group_values(const std::set<std::string>& values) {
  std::vector<std::string> out(values.begin(), values.end());
  const bool numeric = std::all_of(out.begin(), out.end(), [](const std::string& v) {
    double x;
    return parse_double(v, x);
  });
  if (numeric) {
    std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
      return std::stod(a) < std::stod(b);
    });
  }
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

const char* split_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::kLabeled: return "labeled";
    case SplitTag::kUnlabeled: return "unlabeled";
    case SplitTag::kValidation: return "validation";
    case SplitTag::kTest: return "test";
  }
  return "?";
}

int DatasetSchema::output_dims() const {
  int total = 0;
  for (const auto& block : label_blocks) {
    total += block.encoding == LabelEncoding::kBinary ? 1 : static_cast<int>(block.categories.size());
  }
  return total;
}

void DatasetSchema::validate() const {
  if (sensitive_column.empty()) throw SchemaError("schema has no sensitive_column");
  if (label_blocks.empty()) throw SchemaError("schema has no label_blocks");
  for (const auto& f : feature_columns) {
    if (f.name == sensitive_column) {
      throw SchemaError("sensitive column '" + f.name + "' must not be a feature column");
    }
    if (f.kind == FeatureKind::kCategorical && f.categories.empty()) {
      throw SchemaError("categorical column '" + f.name + "' has no category vocabulary");
    }
  }
  for (const auto& b : label_blocks) {
    if (b.encoding == LabelEncoding::kOneHot && b.categories.empty()) {
      throw SchemaError("one-hot label block '" + b.name + "' has no category vocabulary");
    }
  }
  if (output_dims() < 1) throw SchemaError("label blocks expand to zero outputs");
}

DatasetSchema DatasetSchema::from_json_text(const std::string& text) {
  DatasetSchema schema;
  try {
    const json j = json::parse(text);
    for (const auto& f : j.at("feature_columns")) {
      FeatureColumn col;
      col.name = f.at("name").get<std::string>();
      col.kind = parse_kind(f.at("kind").get<std::string>());
      if (f.contains("categories")) col.categories = f.at("categories").get<std::vector<std::string>>();
      schema.feature_columns.push_back(std::move(col));
    }
    for (const auto& b : j.at("label_blocks")) {
      LabelBlock block;
      block.name = b.at("name").get<std::string>();
      block.source_column = b.at("source_column").get<std::string>();
      block.encoding = parse_encoding(b.at("encoding").get<std::string>());
      if (b.contains("categories")) block.categories = b.at("categories").get<std::vector<std::string>>();
      schema.label_blocks.push_back(std::move(block));
    }
    schema.sensitive_column = j.at("sensitive_column").get<std::string>();
    if (j.contains("positive_values")) {
      schema.positive_values =
          j.at("positive_values").get<std::map<std::string, std::vector<std::string>>>();
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed schema: ") + e.what());
  }
  schema.validate();
  return schema;
}

DatasetSchema DatasetSchema::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::vector<int> TabularDataset::indices(SplitTag tag) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(split.size()); ++i) {
    if (split[i] == tag) out.push_back(i);
  }
  return out;
}

TabularDataset load_csv(const std::filesystem::path& path, const DatasetSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty file " + path.string());
  const auto header = split_csv_line(line);
  auto column_index = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "'");
    return static_cast<int>(it - header.begin());
  };

  std::vector<int> feature_idx;
  for (const auto& f : schema.feature_columns) feature_idx.push_back(column_index(f.name));
  std::vector<int> label_idx;
  for (const auto& b : schema.label_blocks) label_idx.push_back(column_index(b.source_column));
  const int sensitive_idx = column_index(schema.sensitive_column);

  // Expanded feature layout.
  TabularDataset ds;
  for (const auto& f : schema.feature_columns) {
    if (f.kind == FeatureKind::kContinuous) {
      ds.feature_names.push_back(f.name);
      ds.continuous.push_back(true);
    } else {
      for (const auto& c : f.categories) {
        ds.feature_names.push_back(f.name + "=" + c);
        ds.continuous.push_back(false);
      }
    }
  }
  for (const auto& b : schema.label_blocks) {
    const int begin = static_cast<int>(ds.label_names.size());
    if (b.encoding == LabelEncoding::kBinary) {
      ds.label_names.push_back(b.name);
    } else {
      for (const auto& c : b.categories) ds.label_names.push_back(b.name + "=" + c);
    }
    ds.label_block_ranges.emplace_back(begin, static_cast<int>(ds.label_names.size()));
  }

  std::vector<std::vector<double>> feature_rows;
  std::vector<std::vector<double>> label_rows;
  std::vector<std::string> group_values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < header.size()) {
      throw SchemaError("line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " fields, header has " + std::to_string(header.size()));
    }
    bool missing = is_missing(cells[sensitive_idx]);
    for (int idx : feature_idx) missing = missing || is_missing(cells[idx]);
    for (int idx : label_idx) missing = missing || is_missing(cells[idx]);
    if (missing) {
      ++ds.dropped_rows;
      continue;
    }

    std::vector<double> frow;
    for (std::size_t c = 0; c < schema.feature_columns.size(); ++c) {
      const auto& col = schema.feature_columns[c];
      const std::string& value = cells[feature_idx[c]];
      if (col.kind == FeatureKind::kContinuous) {
        double x;
        if (!parse_double(value, x)) {
          throw SchemaError("non-numeric value '" + value + "' in continuous column '" + col.name + "'");
        }
        frow.push_back(x);
      } else {
        const auto it = std::find(col.categories.begin(), col.categories.end(), value);
        if (it == col.categories.end()) {
          throw SchemaError("unknown category '" + value + "' in column '" + col.name + "'");
        }
        for (std::size_t k = 0; k < col.categories.size(); ++k) {
          frow.push_back(static_cast<std::size_t>(it - col.categories.begin()) == k ? 1.0 : 0.0);
        }
      }
    }

    std::vector<double> lrow;
    for (std::size_t b = 0; b < schema.label_blocks.size(); ++b) {
      const auto& block = schema.label_blocks[b];
      const std::string& value = cells[label_idx[b]];
      if (block.encoding == LabelEncoding::kBinary) {
        const auto pv = schema.positive_values.find(block.source_column);
        if (pv != schema.positive_values.end()) {
          const bool pos = std::find(pv->second.begin(), pv->second.end(), value) != pv->second.end();
          lrow.push_back(pos ? 1.0 : 0.0);
        } else if (value == "1" || value == "0") {
          lrow.push_back(value == "1" ? 1.0 : 0.0);
        } else {
          throw SchemaError("unknown label value '" + value + "' in column '" + block.source_column +
                            "' (no positive_values entry)");
        }
      } else {
        const auto it = std::find(block.categories.begin(), block.categories.end(), value);
        if (it == block.categories.end()) {
          throw SchemaError("unknown category '" + value + "' in column '" + block.source_column + "'");
        }
        for (std::size_t k = 0; k < block.categories.size(); ++k) {
          lrow.push_back(static_cast<std::size_t>(it - block.categories.begin()) == k ? 1.0 : 0.0);
        }
      }
    }
    feature_rows.push_back(std::move(frow));
    label_rows.push_back(std::move(lrow));
    group_values.push_back(cells[sensitive_idx]);
  }

  const int n = static_cast<int>(feature_rows.size());
  if (n == 0) throw SchemaError("no usable rows in " + path.string());
  ds.X.resize(n, static_cast<Eigen::Index>(ds.feature_names.size()));
  ds.Y.resize(n, static_cast<Eigen::Index>(ds.label_names.size()));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < ds.X.cols(); ++j) ds.X(i, j) = feature_rows[i][j];
    for (int j = 0; j < ds.Y.cols(); ++j) ds.Y(i, j) = label_rows[i][j];
  }

  ds.group_names = sorted_group_values(std::set<std::string>(group_values.begin(), group_values.end()));
  ds.num_groups = static_cast<int>(ds.group_names.size());
  ds.groups.resize(n);
  for (int i = 0; i < n; ++i) {
    ds.groups[i] = static_cast<int>(
        std::find(ds.group_names.begin(), ds.group_names.end(), group_values[i]) - ds.group_names.begin());
  }
  return ds;
}

TabularDataset split(TabularDataset ds, std::uint64_t seed, const SplitFractions& fractions) {
  const std::array<double, kNumSplits> frac = {fractions.labeled, fractions.unlabeled,
                                               fractions.validation, fractions.test};
  double total = 0.0;
  for (double f : frac) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  if (ds.num_groups < 2) throw ConfigError("at least two sensitive groups are required");

  std::vector<std::vector<int>> members(ds.num_groups);
  for (int i = 0; i < ds.rows(); ++i) members[ds.groups[i]].push_back(i);

  std::mt19937_64 rng(seed);
  ds.split.assign(ds.rows(), SplitTag::kUnlabeled);
  for (int k = 0; k < ds.num_groups; ++k) {
    auto& idx = members[k];
    const int nk = static_cast<int>(idx.size());
    if (nk < kNumSplits) {
      throw ConfigError("group '" + (k < static_cast<int>(ds.group_names.size()) ? ds.group_names[k]
                                                                                : std::to_string(k)) +
                        "' has " + std::to_string(nk) + " rows; cannot appear in all " +
                        std::to_string(kNumSplits) + " splits");
    }
    // Largest-remainder apportionment, then make sure no split is empty.
    std::array<int, kNumSplits> count{};
    std::array<double, kNumSplits> rem{};
    int assigned = 0;
    for (int s = 0; s < kNumSplits; ++s) {
      const double exact = frac[s] * nk;
      count[s] = static_cast<int>(std::floor(exact));
      rem[s] = exact - count[s];
      assigned += count[s];
    }
    std::array<int, kNumSplits> order = {0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
    for (int r = 0; assigned < nk; ++r, ++assigned) ++count[order[r % kNumSplits]];
    for (int s = 0; s < kNumSplits; ++s) {
      if (count[s] == 0) {
        const int donor = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
        --count[donor];
        ++count[s];
      }
    }

    std::shuffle(idx.begin(), idx.end(), rng);
    int pos = 0;
    for (int s = 0; s < kNumSplits; ++s) {
      for (int c = 0; c < count[s]; ++c) ds.split[idx[pos++]] = static_cast<SplitTag>(s);
    }
  }
  return ds;
}

TabularDataset preprocess(TabularDataset ds) {
  if (ds.standardized) return ds;
  if (!ds.has_splits()) throw ConfigError("preprocess requires split tags");
  std::vector<int> train;
  for (int i = 0; i < ds.rows(); ++i) {
    if (ds.split[i] == SplitTag::kLabeled || ds.split[i] == SplitTag::kUnlabeled) train.push_back(i);
  }
  if (train.empty()) throw ConfigError("no training rows to standardize with");
  for (int j = 0; j < ds.features(); ++j) {
    if (!ds.continuous[j]) continue;
    double mean = 0.0;
    for (int i : train) mean += ds.X(i, j);
    mean /= static_cast<double>(train.size());
    double var = 0.0;
    for (int i : train) var += (ds.X(i, j) - mean) * (ds.X(i, j) - mean);
    var /= static_cast<double>(train.size());
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    ds.X.col(j) = (ds.X.col(j).array() - mean) / sd;
  }
  ds.standardized = true;
  return ds;
}

TabularDataset synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.K < 2) throw ConfigError("synthetic config needs K >= 2");
  if (cfg.d < 1 || cfg.L < 1) throw ConfigError("synthetic config needs d >= 1 and L >= 1");
  if (cfg.n < 4 * cfg.K) throw ConfigError("synthetic config needs n >= 4K");
  if (!(cfg.signal > 0.0) || !std::isfinite(cfg.signal)) {
    throw ConfigError("synthetic signal must be positive (zero gives a degenerate labeler)");
  }
  if (!std::isfinite(cfg.group_mean_shift)) throw ConfigError("group_mean_shift must be finite");
  if (!(cfg.label_group_alignment >= 0.0 && cfg.label_group_alignment <= 1.0)) {
    throw ConfigError("label_group_alignment must lie in [0, 1]");
  }
  if (static_cast<int>(cfg.prevalence.size()) != cfg.K) throw ConfigError("prevalence must have K rows");
  for (const auto& row : cfg.prevalence) {
    if (static_cast<int>(row.size()) != cfg.L) throw ConfigError("prevalence rows must have L entries");
    for (double p : row) {
      if (!(p > 0.0 && p < 1.0)) throw ConfigError("prevalences must lie in (0, 1)");
    }
  }
  std::vector<double> props = cfg.group_proportions;
  if (props.empty()) props.assign(cfg.K, 1.0);
  if (static_cast<int>(props.size()) != cfg.K) throw ConfigError("group_proportions must have K entries");
  for (double p : props) {
    if (!(p > 0.0)) throw ConfigError("group_proportions must be positive");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Exact group sizes by largest remainder, assigned then shuffled.
  const double psum = std::accumulate(props.begin(), props.end(), 0.0);
  std::vector<int> sizes(cfg.K);
  std::vector<std::pair<double, int>> rem;
  int assigned = 0;
  for (int k = 0; k < cfg.K; ++k) {
    const double exact = props[k] / psum * cfg.n;
    sizes[k] = static_cast<int>(std::floor(exact));
    rem.emplace_back(exact - sizes[k], k);
    assigned += sizes[k];
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (int r = 0; assigned < cfg.n; ++r, ++assigned) ++sizes[rem[r % cfg.K].second];

  TabularDataset ds;
  ds.num_groups = cfg.K;
  for (int k = 0; k < cfg.K; ++k) {
    for (int c = 0; c < sizes[k]; ++c) ds.groups.push_back(k);
    ds.group_names.push_back("g" + std::to_string(k));
  }
  std::shuffle(ds.groups.begin(), ds.groups.end(), rng);

  Vector direction(cfg.d);
  for (int j = 0; j < cfg.d; ++j) direction(j) = normal(rng);
  direction.normalize();

  const int extra = cfg.categorical_levels > 0 ? cfg.categorical_levels : 0;
  ds.X.resize(cfg.n, cfg.d + extra);
  ds.X.setZero();
  for (int i = 0; i < cfg.n; ++i) {
    const double offset = cfg.group_mean_shift * (ds.groups[i] - 0.5 * (cfg.K - 1));
    for (int j = 0; j < cfg.d; ++j) ds.X(i, j) = normal(rng) + offset * direction(j);
  }
  if (extra > 0) {
    std::uniform_int_distribution<int> level(0, extra - 1);
    for (int i = 0; i < cfg.n; ++i) ds.X(i, cfg.d + level(rng)) = 1.0;
  }
  for (int j = 0; j < cfg.d; ++j) {
    ds.feature_names.push_back("x" + std::to_string(j));
    ds.continuous.push_back(true);
  }
  for (int c = 0; c < extra; ++c) {
    ds.feature_names.push_back("cat=" + std::to_string(c));
    ds.continuous.push_back(false);
  }

  Matrix weights(cfg.d, cfg.L);
  for (int l = 0; l < cfg.L; ++l) {
    for (int j = 0; j < cfg.d; ++j) weights(j, l) = normal(rng);
    weights.col(l).normalize();
    // Tilt toward the group direction so label signal and group membership share features.
    weights.col(l) = (1.0 - cfg.label_group_alignment) * weights.col(l) + cfg.label_group_alignment * direction;
    weights.col(l) *= cfg.signal / std::max(weights.col(l).norm(), 1e-12);
  }
  const Matrix scores = ds.X.leftCols(cfg.d) * weights;

  // Per-(group, label) intercepts calibrated by bisection to the requested prevalence.
  ds.oracle_probs.resize(cfg.n, cfg.L);
  for (int k = 0; k < cfg.K; ++k) {
    std::vector<int> rows;
    for (int i = 0; i < cfg.n; ++i) {
      if (ds.groups[i] == k) rows.push_back(i);
    }
    for (int l = 0; l < cfg.L; ++l) {
      auto mean_prob = [&](double b) {
        double s = 0.0;
        for (int i : rows) s += sigmoid(scores(i, l) + b);
        return s / static_cast<double>(rows.size());
      };
      double lo = -60.0, hi = 60.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_prob(mid) < cfg.prevalence[k][l] ? lo : hi) = mid;
      }
      const double b = 0.5 * (lo + hi);
      for (int i : rows) ds.oracle_probs(i, l) = sigmoid(scores(i, l) + b);
    }
  }

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ds.Y.resize(cfg.n, cfg.L);
  for (int i = 0; i < cfg.n; ++i) {
    for (int l = 0; l < cfg.L; ++l) ds.Y(i, l) = unif(rng) < ds.oracle_probs(i, l) ? 1.0 : 0.0;
  }
  for (int l = 0; l < cfg.L; ++l) {
    ds.label_names.push_back("y" + std::to_string(l));
    ds.label_block_ranges.emplace_back(l, l + 1);
  }
  return ds;
}

void dump_csv(const TabularDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  for (const auto& f : ds.feature_names) out << f << ',';
  for (const auto& l : ds.label_names) out << l << ',';
  out << "group,split\n";
  for (int i = 0; i < ds.rows(); ++i) {
    for (int j = 0; j < ds.features(); ++j) out << ds.X(i, j) << ',';
    for (int j = 0; j < ds.outputs(); ++j) out << ds.Y(i, j) << ',';
    out << ds.groups[i] << ',' << (ds.has_splits() ? split_name(ds.split[i]) : "") << '\n';
  }
}

Matrix take_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
  return out;
}

std::vector<int> take(const std::vector<int>& v, const std::vector<int>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(v[r]);
  return out;
}

}  // namespace fairssl
