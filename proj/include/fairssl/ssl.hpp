#pragma once

#include <random>
#include <vector>

#include "fairssl/data.hpp"

namespace fairssl {

/// Element-wise confidence gate over an n x L prediction matrix.
struct GateMask {
  Matrix mask;    // 1 where max(p, 1-p) >= tau
  Matrix pseudo;  // hard pseudo-label 1[p >= 0.5]
  double pass_ratio = 0.0;

  int gated() const { return static_cast<int>(mask.sum()); }
};

struct HealthSignals {
  double pass_ratio = 0.0;       // q_t
  double proxy_accuracy = 1.0;   // p_t
  double ess = 1.0;              // ESS_t
  bool proxy_degenerate = false; // no gated entries; p_t is a placeholder
};

struct LossValue {
  double value = 0.0;
  Matrix dlogits;  // derivative of value w.r.t. the logits it was computed from
};

/// Additive Gaussian noise on continuous columns only.
Matrix augment_weak(const Matrix& X, const std::vector<bool>& continuous, std::mt19937_64& rng, double sigma);

/// Stronger noise plus per-entry zero-out of continuous columns.
Matrix augment_strong(const Matrix& X, const std::vector<bool>& continuous, std::mt19937_64& rng, double sigma,
                      double p_drop);

GateMask confidence_gate(const Matrix& probs_weak, double tau);

/// Masked mean binary cross-entropy of strong-view logits against pseudo-labels:
/// sum over gated entries divided by max(1, #gated).
LossValue unsup_loss(const Matrix& logits_strong, const Matrix& pseudo, const Matrix& mask);

HealthSignals health_signals(const GateMask& gate, const Matrix& probs_weak, const Matrix& probs_strong);

/// Numerically stable BCE-with-logits for one entry.
double bce_with_logits(double z, double y);

}  // namespace fairssl
