#include "fairssl/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "fairssl/data.hpp"

namespace fairssl {

const char* baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::kBase: return "base";
    case BaselineKind::kStatic: return "static";
    case BaselineKind::kEmaP: return "emap";
    case BaselineKind::kPi: return "pi";
    case BaselineKind::kDualAsc: return "dualasc";
  }
  return "?";
}

void BaselineConfig::validate() const {
  if (!(lambda_static >= 0.0)) throw ConfigError("static lambda must be nonnegative");
  if (!(target_fraction > 0.0)) throw ConfigError("target fraction must be positive");
  if (warmup < 1) throw ConfigError("warmup must be at least one epoch");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must lie in [0, 1)");
  if (!(lambda0 >= 0.0) || !(lambda_cap > 0.0)) throw ConfigError("lambda0 and lambda_cap must be nonnegative");
  if (!(dualasc_eta > 0.0)) throw ConfigError("dual ascent step must be positive");
}

const std::vector<double>& target_fraction_grid() {
  static const std::vector<double> grid{0.1, 0.25, 0.5, 0.75, 0.9, 1.0};
  return grid;
}

const std::vector<double>& static_lambda_grid() {
  static const std::vector<double> grid{0.1, 1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  return grid;
}

double calibrate_vtgt(const std::vector<double>& v, double f) {
  if (v.empty()) throw ConfigError("calibrate_vtgt: no warmup violations");
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  const size_t n = s.size();
  const double median = n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  return f * median;
}

double emap_update(double lambda, double v_bar, double v_tgt, double kappa, double cap) {
  return std::clamp(lambda * std::exp(kappa * (v_bar - v_tgt) / std::max(v_tgt, 1e-8)), 0.0, cap);
}

double pi_update(double lambda0, double error, double& integral, double kp, double ki, double cap) {
  integral += error;
  return std::clamp(lambda0 + kp * error + ki * integral, 0.0, cap);
}

double dualasc_update(double lambda, double v_bar, double v_tgt, double eta) {
  return std::max(0.0, lambda + eta * (v_bar - v_tgt));
}

BaselineController::BaselineController(BaselineConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  state_.lambda = initial_weights().lambda_v;
}

DualWeights BaselineController::initial_weights() const {
  switch (cfg_.kind) {
    case BaselineKind::kBase: return {0.0, 0.0};
    case BaselineKind::kStatic: return {cfg_.lambda_static, 0.0};
    default: return {cfg_.lambda0, 0.0};
  }
}

DualWeights BaselineController::step(double v) {
  BaselineState& st = state_;
  ++st.t;
  st.v_bar.update(v, cfg_.rho);
  if (cfg_.kind == BaselineKind::kBase || cfg_.kind == BaselineKind::kStatic) {
    warm_ = false;
    return {st.lambda, 0.0};
  }
  if (st.t <= cfg_.warmup) {
    st.warmup_violations.push_back(v);
    if (st.t == cfg_.warmup) {
      st.v_tgt = calibrate_vtgt(st.warmup_violations, cfg_.target_fraction);
      st.calibrated = true;
    }
    warm_ = true;
    st.lambda = cfg_.lambda0;
    return {st.lambda, 0.0};
  }
  warm_ = false;
  double e = st.v_bar.value - st.v_tgt;
  if (cfg_.pi_relative_error) e /= std::max(st.v_tgt, 1e-8);
  switch (cfg_.kind) {
    case BaselineKind::kEmaP:
      st.lambda = emap_update(st.lambda, st.v_bar.value, st.v_tgt, cfg_.emap_kappa, cfg_.lambda_cap);
      break;
    case BaselineKind::kPi:
      st.lambda = pi_update(cfg_.lambda0, e, st.integral, cfg_.pi_kp, cfg_.pi_ki, cfg_.lambda_cap);
      break;
    case BaselineKind::kDualAsc:
      st.lambda = dualasc_update(st.lambda, st.v_bar.value, st.v_tgt, cfg_.dualasc_eta);
      break;
    default: break;
  }
  return {st.lambda, 0.0};
}

nlohmann::json BaselineController::trace_json() const {
  return {{"t", state_.t},
          {"kind", baseline_name(cfg_.kind)},
          {"lambda_v", state_.lambda},
          {"lambda_h", 0.0},
          {"v_bar", state_.v_bar.value},
          {"v_tgt", state_.v_tgt},
          {"integral", state_.integral},
          {"warmup", warm_}};
}

}  // namespace fairssl
