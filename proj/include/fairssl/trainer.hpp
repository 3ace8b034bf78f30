#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairssl/baselines.hpp"
#include "fairssl/controller.hpp"
#include "fairssl/data.hpp"
#include "fairssl/fairness.hpp"
#include "fairssl/nnet.hpp"

namespace fairssl {

enum class Method { kBase, kStatic, kEmaP, kPi, kDualAsc, kOpda, kOpdaLite };

const char* method_name(Method m);
Method parse_method(const std::string& name);
bool is_opda(Method m);

/// Where a run's data comes from: a CSV with a schema, or a synthetic generator.
struct DatasetSpec {
  std::string name = "synthetic";
  std::filesystem::path csv;
  std::filesystem::path schema;
  std::optional<SynthConfig> synth;
  std::uint64_t data_seed = 0;  // synthetic generation
  std::uint64_t split_seed = 0;
  SplitFractions fractions;

  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

/// Loads or generates, splits and standardizes.
TabularDataset prepare_dataset(const DatasetSpec& spec);

SynthConfig synth_from_json(const nlohmann::json& j);
nlohmann::json synth_to_json(const SynthConfig& c);

struct RunConfig {
  DatasetSpec dataset;
  Method method = Method::kOpda;
  double lambda_static = 10.0;
  double target_fraction = 0.5;
  double lambda0 = 1.0;
  bool pi_relative_error = true;
  std::vector<int> hidden{64, 64};
  Activation activation = Activation::kRelu;
  double lr = 1e-3;
  int batch_labeled = 64;
  int batch_unlabeled = 256;
  double tau = 0.95;
  double lambda_u = 1.0;
  int epochs = 100;
  std::uint64_t seed = 0;
  double sigma_weak = 0.1;
  double sigma_strong = 0.5;
  double p_drop = 0.2;
  FairnessOptions fairness;
  /// v_t source: epoch mean of the mini-batch penalties ("batch") or one pass over the unlabeled split ("full").
  bool v_from_batches = true;
  int primary_dim = 0;
  OpdaConfig opda;
  std::filesystem::path out_dir;  // empty: do not write a log

  void validate() const;
  /// Method-specific setting label, e.g. "lambda=10" or "f=0.5".
  std::string setting() const;
  std::string run_id() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

struct FailureFlags {
  bool masking_collapse = false;
  bool trivial_saturation = false;
};

struct TrainHooks {
  /// Called before every optimizer step with the weights used for that step and the step gradient.
  std::function<void(int epoch, int step, const DualWeights& weights, const GradVector& grad)> on_step;
  /// Replaces validation labels for r_t only.
  std::function<void(Matrix& y_val)> perturb_validation;
};

struct RunResult {
  bool completed = false;
  std::string error;
  std::vector<nlohmann::json> lines;  // per-epoch lines, then the final line when completed
  MetricReport test;
  FailureFlags failures;
  Matrix test_probs;
  MlpParams params;
  std::vector<DualWeights> lambdas;  // weights used in each epoch
  std::vector<EpochSignals> signals;

  std::vector<nlohmann::json> epoch_lines() const;
};

/// Trains one run on a prepared dataset.
RunResult train_run(const RunConfig& cfg, const TabularDataset& data, const TrainHooks& hooks = {});

/// Loads the dataset described by the config and trains.
RunResult train_run(const RunConfig& cfg);

/// Masking collapse: mean q over the last 10% of epochs < 0.05 and q at warmup exit >= 0.2.
bool masking_collapse(const std::vector<double>& q, int warmup);

FailureFlags detect_failures(const std::vector<double>& q, int warmup, const Matrix& final_probs);

void write_jsonl(const std::vector<nlohmann::json>& lines, const std::filesystem::path& path);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

}  // namespace fairssl
