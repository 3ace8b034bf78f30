#include "fairssl/ssl.hpp"

#include <algorithm>
#include <cmath>

#include "fairssl/nnet.hpp"

namespace fairssl {

double bce_with_logits(double z, double y) {
  // softplus(z) - y z
  const double sp = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return sp - y * z;
}

Matrix augment_weak(const Matrix& X, const std::vector<bool>& continuous, std::mt19937_64& rng, double sigma) {
  if (sigma < 0.0) throw ConfigError("weak augmentation sigma must be >= 0");
  Matrix out = X;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> noise(0.0, sigma);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      if (continuous[j]) out(i, j) += noise(rng);
    }
  }
  return out;
}

Matrix augment_strong(const Matrix& X, const std::vector<bool>& continuous, std::mt19937_64& rng, double sigma,
                      double p_drop) {
  if (sigma < 0.0) throw ConfigError("strong augmentation sigma must be >= 0");
  if (!(p_drop >= 0.0 && p_drop < 1.0)) throw ConfigError("p_drop must lie in [0, 1)");
  Matrix out = X;
  std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
  std::bernoulli_distribution drop(p_drop);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      if (!continuous[j]) continue;
      if (sigma > 0.0) out(i, j) += noise(rng);
      if (p_drop > 0.0 && drop(rng)) out(i, j) = 0.0;
    }
  }
  return out;
}

GateMask confidence_gate(const Matrix& probs_weak, double tau) {
  if (!(tau > 0.5 && tau < 1.0)) throw ConfigError("confidence threshold tau must lie in (0.5, 1)");
  GateMask g;
  g.mask = probs_weak.unaryExpr([tau](double p) { return std::max(p, 1.0 - p) >= tau ? 1.0 : 0.0; });
  g.pseudo = probs_weak.unaryExpr([](double p) { return p >= 0.5 ? 1.0 : 0.0; });
  g.pass_ratio = probs_weak.size() > 0 ? g.mask.mean() : 0.0;
  return g;
}

LossValue unsup_loss(const Matrix& logits_strong, const Matrix& pseudo, const Matrix& mask) {
  if (logits_strong.rows() != mask.rows() || logits_strong.cols() != mask.cols() ||
      pseudo.rows() != mask.rows() || pseudo.cols() != mask.cols()) {
    throw ConfigError("unsup_loss: shape mismatch");
  }
  LossValue out;
  out.dlogits = Matrix::Zero(mask.rows(), mask.cols());
  const double denom = std::max(1.0, mask.sum());
  double total = 0.0;
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (mask(i, j) == 0.0) continue;
      const double z = logits_strong(i, j);
      total += bce_with_logits(z, pseudo(i, j));
      out.dlogits(i, j) = (logistic(z) - pseudo(i, j)) / denom;
    }
  }
  out.value = total / denom;
  return out;
}

HealthSignals health_signals(const GateMask& gate, const Matrix& probs_weak, const Matrix& probs_strong) {
  if (probs_weak.rows() != gate.mask.rows() || probs_strong.rows() != gate.mask.rows() ||
      probs_weak.cols() != gate.mask.cols() || probs_strong.cols() != gate.mask.cols()) {
    throw ConfigError("health_signals: shape mismatch");
  }
  HealthSignals h;
  h.pass_ratio = gate.mask.size() > 0 ? gate.mask.mean() : 0.0;
  double agree = 0.0, gated = 0.0, sw = 0.0, sw2 = 0.0;
  for (Eigen::Index i = 0; i < gate.mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < gate.mask.cols(); ++j) {
      if (gate.mask(i, j) == 0.0) continue;
      gated += 1.0;
      const double strong_hard = probs_strong(i, j) >= 0.5 ? 1.0 : 0.0;
      if (strong_hard == gate.pseudo(i, j)) agree += 1.0;
      const double w = std::max(probs_weak(i, j), 1.0 - probs_weak(i, j));
      sw += w;
      sw2 += w * w;
    }
  }
  if (gated == 0.0) {
    h.proxy_accuracy = 1.0;
    h.proxy_degenerate = true;
    h.ess = 1.0;
    return h;
  }
  h.proxy_accuracy = agree / gated;
  h.ess = std::max(1.0, sw * sw / sw2);
  return h;
}

}  // namespace fairssl
