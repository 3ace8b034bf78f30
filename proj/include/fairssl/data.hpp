#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fairssl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FeatureKind { kContinuous, kCategorical };
enum class LabelEncoding { kBinary, kOneHot };

struct FeatureColumn {
  std::string name;
  FeatureKind kind = FeatureKind::kContinuous;
  std::vector<std::string> categories;  // required for categorical columns
};

struct LabelBlock {
  std::string name;
  std::string source_column;
  LabelEncoding encoding = LabelEncoding::kBinary;
  std::vector<std::string> categories;  // one-hot vocabulary
};

struct DatasetSchema {
  std::vector<FeatureColumn> feature_columns;
  std::vector<LabelBlock> label_blocks;
  std::string sensitive_column;
  std::map<std::string, std::vector<std::string>> positive_values;

  /// Number of output dimensions the label blocks expand to.
  int output_dims() const;
  void validate() const;

  static DatasetSchema from_json_file(const std::filesystem::path& path);
  static DatasetSchema from_json_text(const std::string& text);
};

enum class SplitTag : std::uint8_t { kLabeled = 0, kUnlabeled = 1, kValidation = 2, kTest = 3 };
inline constexpr int kNumSplits = 4;

const char* split_name(SplitTag tag);

struct TabularDataset {
  Matrix X;                       // n x d
  Matrix Y;                       // n x L, entries in {0, 1}
  std::vector<int> groups;        // n, values in [0, K)
  std::vector<SplitTag> split;    // n
  int num_groups = 0;

  std::vector<std::string> feature_names;
  std::vector<bool> continuous;   // per feature column of X
  std::vector<std::string> label_names;
  std::vector<std::string> group_names;
  std::vector<std::pair<int, int>> label_block_ranges;  // [begin, end) per block

  /// Ground-truth class probabilities when the generator knows them (synthetic data only).
  Matrix oracle_probs;
  bool standardized = false;
  int dropped_rows = 0;

  int rows() const { return static_cast<int>(X.rows()); }
  int features() const { return static_cast<int>(X.cols()); }
  int outputs() const { return static_cast<int>(Y.cols()); }

  std::vector<int> indices(SplitTag tag) const;
  bool has_splits() const { return split.size() == groups.size() && !split.empty(); }
};

struct SplitFractions {
  double labeled = 0.05;
  double unlabeled = 0.75;
  double validation = 0.10;
  double test = 0.10;
};

struct SynthConfig {
  int n = 10000;
  int d = 8;
  int K = 2;
  int L = 4;
  double group_mean_shift = 1.0;
  /// prevalence[k][l]; must be K x L with entries in (0, 1).
  std::vector<std::vector<double>> prevalence;
  /// Relative group sizes; empty means balanced.
  std::vector<double> group_proportions;
  /// Norm of each label's ground-truth weight vector.
  double signal = 2.0;
  double label_group_alignment = 0.0;  // 0: label weights independent of the group direction
  /// Adds one uninformative categorical feature with this many levels (0 = none).
  int categorical_levels = 0;
};

TabularDataset load_csv(const std::filesystem::path& path, const DatasetSchema& schema);

/// Stratified-by-group assignment of split tags; deterministic given the seed.
TabularDataset split(TabularDataset ds, std::uint64_t seed, const SplitFractions& fractions);

/// Z-scores continuous columns with labeled+unlabeled statistics. Already
/// standardized datasets are returned unchanged.
TabularDataset preprocess(TabularDataset ds);

TabularDataset synth_generate(const SynthConfig& config, std::uint64_t seed);

void dump_csv(const TabularDataset& ds, const std::filesystem::path& path);

/// Row subset helpers.
Matrix take_rows(const Matrix& m, const std::vector<int>& rows);
std::vector<int> take(const std::vector<int>& v, const std::vector<int>& rows);

}  // namespace fairssl
