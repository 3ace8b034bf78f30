#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

namespace fairssl {

/// Fixed controller constants. Defaults are the pre-specified configuration.
struct OpdaConfig {
  double rho = 0.9;               // EMA momentum
  int warmup = 20;                // T_warm, epochs
  double noise_k = 1.0;           // margin = k * std(window)
  double gate_beta = 8.0;         // phi(c) = sigmoid(beta c)
  double b_min = 0.0;
  double eps_b = 1e-8;            // log-floor
  double b_max_soft = 1e6;
  double eta0 = 0.5;              // eta_t = eta0 / sqrt(max(1, t - T_warm))
  double eps_alloc = 1e-8;
  double b_warm_init = 1.0;       // budget held during warmup
  double stabilization = 3.0;     // s_tilde clipped to +-3 (m_v + m_r + 1e-8)

  int window() const;             // clip(T_warm, 10, 30)
  double eta(int t) const;
  double leak(int t) const;       // 1 / sqrt(1 + t)
  double pi_min(double ess) const;  // 1 / (10 + 2 max(1, ESS))
  double log_floor() const;       // log(B_min + eps_B)
  double log_cap() const;         // log(B_max_soft)
  void validate() const;

  nlohmann::json to_json() const;
  static OpdaConfig from_json(const nlohmann::json& j);
};

/// Online observables consumed once per epoch.
struct EpochSignals {
  double v = 0.0;      // training fairness penalty
  double r = 0.0;      // 1 - validation Macro-F1 at threshold 0.5
  double q = 0.0;      // pseudo-label pass ratio
  double p = 1.0;      // proxy accuracy
  double ess = 1.0;    // effective sample size
  double cos_v = 0.0;  // cos(g_v, g_base)
  double cos_h = 0.0;  // cos(g_h, g_base)

  void validate() const;
};

struct DualWeights {
  double lambda_v = 0.0;
  double lambda_h = 0.0;
};

/// EMA with first-observation initialization.
struct Ema {
  bool initialized = false;
  double value = 0.0;

  double update(double x, double rho);
};

double ema(double prev, double x, double rho);

/// k times the sample standard deviation (n - 1) of the window; 0 for fewer than two entries.
double noise_margin(const std::deque<double>& window, double k);

struct GainCost {
  double gain = 0.0;  // G_t = [-dv - m_v]_+
  double cost = 0.0;  // C_t = [dr - m_r]_+
  double signal = 0.0;  // s_t = G_t - C_t
};

GainCost gain_cost(double delta_v, double delta_r, double margin_v, double margin_r);

/// Projected log-domain step shared by the budget update and the regret bench:
/// clip(u + eta * signal - leak * (u - anchor), lo, hi).
double log_budget_step(double u, double eta, double signal, double leak, double anchor, double lo, double hi);

double gate(double cosine, double beta);

struct OpdaState {
  int t = 0;  // epochs observed
  double u = 0.0;
  double budget = 1.0;
  double pi = 0.5;
  Ema v_bar, r_bar, pi_star_bar, d_v_bar, d_h_bar;
  std::deque<double> dv_window, dr_window;
  // warmup baselines
  double q0 = 0.0, p0 = 0.0, ess0 = 0.0;
  double q_sum = 0.0, p_sum = 0.0, ess_sum = 0.0;
  int warm_count = 0;
  bool baselines_ready = false;
  double u_warm = 0.0;
};

struct BudgetStep {
  double u = 0.0;
  double budget = 0.0;
  double s_tilde = 0.0;
  bool frozen = false;
};

/// Full-controller budget update with margin-scaled clipping of s and a decaying leak toward u_warm.
BudgetStep budget_update(const OpdaState& state, double s, double eta, double margin_v, double margin_r,
                         const OpdaConfig& cfg);

struct Urgency {
  double d_v = 0.0;
  double d_h = 0.0;
};

/// Raw (un-smoothed) urgencies. gain is [-dv - m_v]_+. Throws if warmup baselines are missing.
Urgency urgencies(const OpdaState& state, const EpochSignals& signals, double gain, const OpdaConfig& cfg,
                  bool use_gates = true);

struct Allocation {
  double pi_star = 0.5;
  double pi_star_bar = 0.5;
  double pi_min = 0.0;
  double pi = 0.5;
};

/// Closed-form minimizer of d_v (pi - 1)^2 + d_h pi^2, EMA-smoothed and clipped to the ESS floor.
Allocation allocate(double d_v, double d_h, double ess, Ema& pi_star_bar, const OpdaConfig& cfg);

/// Per-epoch controller record written to the run log.
struct ControllerTrace {
  int t = 0;
  double u = 0.0, budget = 0.0, pi = 0.0, lambda_v = 0.0, lambda_h = 0.0;
  double gain = 0.0, cost = 0.0, s = 0.0, s_tilde = 0.0;
  double d_v = 0.0, d_h = 0.0;
  double m_v = std::numeric_limits<double>::infinity();
  double m_r = std::numeric_limits<double>::infinity();
  double c_v = 0.0, c_h = 0.0;
  double pi_min = 0.0;
  bool warmup = true;
  bool frozen = false;

  nlohmann::json to_json() const;
};

enum class OpdaVariant { kFull, kLite };

class OpdaController {
 public:
  explicit OpdaController(OpdaConfig cfg = {}, OpdaVariant variant = OpdaVariant::kFull);

  /// Weights for the first epoch, before any signal is observed.
  DualWeights initial_weights() const;

  /// Consumes epoch t's signals and returns the weights for epoch t + 1.
  DualWeights step(const EpochSignals& signals);

  const OpdaState& state() const { return state_; }
  const ControllerTrace& last_trace() const { return trace_; }
  const OpdaConfig& config() const { return cfg_; }
  OpdaVariant variant() const { return variant_; }

 private:
  OpdaConfig cfg_;
  OpdaVariant variant_;
  OpdaState state_;
  ControllerTrace trace_;
};

/// One-dimensional convex loss with a subgradient.
struct ConvexLoss {
  std::function<double(double)> value;
  std::function<double(double)> grad;
};

struct RegretPoint {
  int horizon = 0;
  double regret = 0.0;
  double average = 0.0;  // regret / horizon
};

struct RegretCurve {
  double first_loss = 0.0;  // loss_1(u_1)
  std::vector<RegretPoint> points;
};

/// Runs the leak-free log-budget step as projected online gradient descent
/// (signal = -subgradient) and reports Regret(T)/T at each horizon.
RegretCurve regret_bench(const std::function<ConvexLoss(int)>& losses, const std::vector<int>& horizons,
                         double u1, const std::function<double(int)>& eta, double lo, double hi);

}  // namespace fairssl
