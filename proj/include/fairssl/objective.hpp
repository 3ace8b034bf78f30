#pragma once

#include <optional>
#include <vector>

#include "fairssl/fairness.hpp"
#include "fairssl/nnet.hpp"
#include "fairssl/ssl.hpp"

namespace fairssl {

/// One optimization batch: labeled rows plus weak/strong views of the same unlabeled rows.
struct Batch {
  Matrix x_labeled;
  Matrix y_labeled;
  Matrix x_weak;
  Matrix x_strong;
  std::vector<int> groups;  // sensitive group per unlabeled row
  int num_groups = 0;
  /// Gate snapshot; computed from the weak view at the current parameters when absent.
  std::optional<GateMask> gate;
};

struct ObjectiveConfig {
  double tau = 0.95;
  double lambda_u = 1.0;
  double lambda_v = 0.0;
  double lambda_h = 0.0;
  FairnessOptions fairness;
};

enum class LossSelector { kSup, kUnsup, kFairness, kEntropy, kTotal };

const char* selector_name(LossSelector s);

struct LossBreakdown {
  double sup = 0.0;
  double unsup = 0.0;
  double fairness = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

struct GradResult {
  double loss = 0.0;
  GradVector grad;
  LossBreakdown parts;
  GateMask gate;
};

/// Loss value and exact reverse-mode gradient of the selected objective term.
/// total = sup + lambda_u * unsup + lambda_v * V + lambda_h * H; every term shares one gate snapshot.
GradResult grad_of(const MlpParams& params, const Batch& batch, LossSelector selector, const ObjectiveConfig& cfg);

/// Scalar value only (used by finite-difference probes).
double loss_of(const MlpParams& params, const Batch& batch, LossSelector selector, const ObjectiveConfig& cfg);

struct AlignmentGrads {
  GradVector base;      // grad of sup + lambda_u * unsup
  GradVector fairness;  // grad of V
  GradVector entropy;   // grad of H
  double cos_fairness = 0.0;
  double cos_entropy = 0.0;
};

AlignmentGrads alignment_grads(const MlpParams& params, const Batch& batch, const ObjectiveConfig& cfg);

}  // namespace fairssl
