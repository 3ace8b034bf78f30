#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairssl/controller.hpp"

namespace fairssl {

enum class BaselineKind { kBase, kStatic, kEmaP, kPi, kDualAsc };

const char* baseline_name(BaselineKind k);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::kStatic;
  double lambda_static = 10.0;  // static schedule value
  double target_fraction = 0.5;  // f in v_tgt = f * median(warmup v)
  int warmup = 20;
  double rho = 0.9;
  double lambda0 = 1.0;  // lambda held during warmup by adaptive kinds
  double emap_kappa = 0.1;
  double pi_kp = 1.0;
  double pi_ki = 0.1;
  bool pi_relative_error = true;  // e = (v_bar - v_tgt) / max(v_tgt, 1e-8)
  double dualasc_eta = 0.1;
  double lambda_cap = 1e6;

  void validate() const;
};

/// Target fractions exposed for the sensitivity sweep.
const std::vector<double>& target_fraction_grid();

/// Static lambda grid {0.1, 1, 10, 20, ..., 100}.
const std::vector<double>& static_lambda_grid();

/// f * median(violations). Throws on an empty list.
double calibrate_vtgt(const std::vector<double>& warmup_violations, double f);

/// clip(lambda * exp(kappa (v_bar - v_tgt) / max(v_tgt, 1e-8)), 0, cap).
double emap_update(double lambda, double v_bar, double v_tgt, double kappa, double cap);

/// Additive PI: integral += e; clip(lambda0 + kp e + ki integral, 0, cap).
double pi_update(double lambda0, double error, double& integral, double kp, double ki, double cap);

/// [lambda + eta (v_bar - v_tgt)]_+
double dualasc_update(double lambda, double v_bar, double v_tgt, double eta);

struct BaselineState {
  int t = 0;
  double lambda = 0.0;
  Ema v_bar;
  double integral = 0.0;
  double v_tgt = 0.0;
  bool calibrated = false;
  std::vector<double> warmup_violations;
};

/// Single-signal schedule for lambda_v; lambda_h is always 0.
class BaselineController {
 public:
  explicit BaselineController(BaselineConfig cfg);

  DualWeights initial_weights() const;

  /// Consumes epoch t's violation and returns the weights for epoch t + 1.
  DualWeights step(double v);

  const BaselineState& state() const { return state_; }
  const BaselineConfig& config() const { return cfg_; }
  nlohmann::json trace_json() const;

 private:
  BaselineConfig cfg_;
  BaselineState state_;
  bool warm_ = true;
};

}  // namespace fairssl
