#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairssl/data.hpp"

namespace fairssl {

struct GroupMoments {
  Vector overall;              // mean over all rows, length L
  std::vector<Vector> groups;  // per-group means, length L each
  std::vector<int> counts;

  static GroupMoments compute(const Matrix& values, const std::vector<int>& groups, int num_groups);
};

struct FairnessOptions {
  bool squared = false;  // sum_k ||.||^2 instead of sum_k ||.||
  bool gated = true;     // restrict moments to gate-passing entries
};

struct PenaltyValue {
  double value = 0.0;
  Matrix dprobs;            // derivative w.r.t. the probabilities
  bool degenerate = false;  // nothing to compare (all groups empty after gating)
  int skipped_terms = 0;    // (group, label) pairs with no gated entries
};

/// Moment-matching DP penalty: sum_k || mu_bar - mu_k ||_2 over per-label means of
/// gated entries. The mask is a constant of the evaluation.
PenaltyValue simfair_penalty(const Matrix& probs, const std::vector<int>& groups, int num_groups,
                             const Matrix& mask, const FairnessOptions& options = {});

inline constexpr double kProbClamp = 1e-7;

/// Mean binary entropy over every entry (no gating).
PenaltyValue entropy_penalty(const Matrix& probs);

struct GapResult {
  double value = 0.0;
  int skipped_terms = 0;
};

/// sum_k || E[yhat] - E[yhat | a = k] ||_2 on hard predictions.
double dp_gap(const Matrix& hard, const std::vector<int>& groups, int num_groups);

/// dp_gap restricted to entries with Y == outcome, per label.
GapResult conditional_gap(const Matrix& hard, const Matrix& Y, const std::vector<int>& groups, int num_groups,
                          double outcome);
GapResult eop_gap(const Matrix& hard, const Matrix& Y, const std::vector<int>& groups, int num_groups);
/// Mean of the Y=1 and Y=0 conditioned gaps.
GapResult eod_gap(const Matrix& hard, const Matrix& Y, const std::vector<int>& groups, int num_groups);

struct Thresholds {
  std::vector<double> values;
  std::vector<bool> fallback;  // label degenerated to 0.5
};

/// Per-label threshold at the (1 - prevalence) quantile of validation scores.
Thresholds rescale_thresholds(const Matrix& scores_val, const Matrix& Y_val);
Thresholds fixed_thresholds(int labels, double t = 0.5);
Matrix binarize(const Matrix& scores, const Thresholds& t);
Matrix binarize(const Matrix& scores, double t);

struct F1Result {
  std::vector<double> per_label;
  std::vector<bool> empty_label;  // no positives and no predicted positives
  double macro = 0.0;
  double micro = 0.0;
};

F1Result f1_scores(const Matrix& preds, const Matrix& Y);
double macro_f1(const Matrix& preds, const Matrix& Y);
double micro_f1(const Matrix& preds, const Matrix& Y);

struct SaturationResult {
  bool saturated = false;
  std::vector<double> per_label_std;
};

inline constexpr double kSaturationStd = 0.01;

/// Saturated iff the per-label std of probabilities is below 0.01 on at least half the labels.
SaturationResult saturation_detect(const Matrix& probs);

struct Decomposition {
  std::vector<double> per_dim_dp;
  std::vector<double> per_dim_f1;
  int primary_dim = 0;
  double binary_dp = 0.0;
  double binary_eod = 0.0;
};

/// Per-label DP/F1 plus binary DP/EOd of the primary label at a fixed 0.5 threshold.
Decomposition decompose(const Matrix& hard, const Matrix& probs, const Matrix& Y, const std::vector<int>& groups,
                        int num_groups, int primary_dim);

struct MetricReport {
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  double dp_gap = 0.0;
  double eop_gap = 0.0;
  double eod_gap = 0.0;
  Decomposition decomposition;
  bool saturated = false;
  std::vector<std::string> flags;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

MetricReport evaluate(const Matrix& probs, const Matrix& Y, const std::vector<int>& groups, int num_groups,
                      const Thresholds& thresholds, int primary_dim);

}  // namespace fairssl
