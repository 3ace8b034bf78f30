#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairssl/controller.hpp"

namespace fairssl {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Constant predictors inside the dead band have zero unsup loss, zero gradient and a flat
/// finite-difference probe. c sweeps `points` values over (1 - tau + 0.01, tau - 0.01).
struct FlatnessReport {
  double tau = 0.0;
  int cases = 0;
  double max_loss = 0.0;
  double max_grad_norm = 0.0;
  double max_fd = 0.0;
};
FlatnessReport dead_band_flatness(double tau, int points, std::uint64_t seed);

/// Logit-space gradients of V and H on the high-confidence majority region of a K = 2 batch.
struct SignConflictReport {
  int region = 0;    // entries examined
  int opposite = 0;  // entries where dV/dz and dH/dz have opposite signs
  double fraction() const { return region > 0 ? static_cast<double>(opposite) / region : 0.0; }
};
SignConflictReport sign_conflict(double tau, double majority_share, std::uint64_t seed);

/// Floor check over logged epoch lines of an OPDA run: lambda_v, lambda_h >= B * pi_min(ESS_t).
struct FloorReport {
  int epochs = 0;
  int violations = 0;
  double min_slack = 0.0;
};
FloorReport anti_starvation(const std::vector<nlohmann::json>& epoch_lines, const OpdaConfig& cfg = {});

/// Closed-form allocation against a grid search of d_v (pi - 1)^2 + d_h pi^2.
struct AllocationReport {
  int cases = 0;
  double max_error = 0.0;
};
double allocation_grid_minimizer(double d_v, double d_h, double step);
AllocationReport allocation_vs_grid(int cases, double step, std::uint64_t seed);

/// Regret curve for the stationary quadratic (u - u_star)^2 with eta_t = 1 / sqrt(t).
RegretCurve quadratic_regret(const std::vector<int>& horizons, double u1 = 0.0, double u_star = 2.0);

/// Runs the full controller and loss property suite.
std::vector<CheckResult> verify_all(std::uint64_t seed = 7);

}  // namespace fairssl
