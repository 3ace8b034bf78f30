#include "fairssl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fairssl/fairness.hpp"
#include "fairssl/nnet.hpp"
#include "fairssl/objective.hpp"
#include "fairssl/ssl.hpp"

namespace fairssl {

namespace {

Matrix gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

std::string fmt(double x) {
  std::ostringstream o;
  o << x;
  return o.str();
}

}  // namespace

FlatnessReport dead_band_flatness(double tau, int points, std::uint64_t seed) {
  FlatnessReport rep;
  rep.tau = tau;
  std::mt19937_64 rng(seed);
  const std::vector<int> dims{5, 8, 3};
  Batch b;
  b.x_weak = gaussian(40, 5, rng);
  b.x_strong = b.x_weak + 0.3 * gaussian(40, 5, rng);
  ObjectiveConfig oc;
  oc.tau = tau;
  const double lo = 1.0 - tau + 0.01, hi = tau - 0.01;
  const double eps = 1e-4;
  for (int k = 0; k < points; ++k) {
    const double c = points > 1 ? lo + (hi - lo) * k / (points - 1) : 0.5 * (lo + hi);
    MlpParams p = constant_predictor(dims, c);
    const GradResult g = grad_of(p, b, LossSelector::kUnsup, oc);
    rep.max_loss = std::max(rep.max_loss, std::abs(g.loss));
    rep.max_grad_norm = std::max(rep.max_grad_norm, g.grad.norm());
    for (Eigen::Index i = 0; i < p.count(); ++i) {
      const double saved = p.flat()(i);
      p.flat()(i) = saved + eps;
      const double up = loss_of(p, b, LossSelector::kUnsup, oc);
      p.flat()(i) = saved - eps;
      const double down = loss_of(p, b, LossSelector::kUnsup, oc);
      p.flat()(i) = saved;
      rep.max_fd = std::max(rep.max_fd, std::abs((up - down) / (2.0 * eps)));
    }
    ++rep.cases;
  }
  return rep;
}

SignConflictReport sign_conflict(double tau, double majority_share, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int n = 500, L = 2;
  const int n_major = static_cast<int>(std::lround(majority_share * n));
  std::vector<int> groups(n);
  for (int i = 0; i < n; ++i) groups[i] = i < n_major ? 0 : 1;
  // Majority logits centered higher than minority logits.
  std::normal_distribution<double> major(3.0, 1.5), minor(0.0, 1.5);
  Matrix probs(n, L);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < L; ++l) probs(i, l) = logistic(groups[i] == 0 ? major(rng) : minor(rng));
  }
  const GateMask gate = confidence_gate(probs, tau);
  const PenaltyValue v = simfair_penalty(probs, groups, 2, gate.mask, FairnessOptions{});
  const PenaltyValue h = entropy_penalty(probs);
  SignConflictReport rep;
  for (int i = 0; i < n_major; ++i) {
    for (int l = 0; l < L; ++l) {
      if (probs(i, l) < tau) continue;
      const double slope = probs(i, l) * (1.0 - probs(i, l));
      const double gv = v.dprobs(i, l) * slope;
      const double gh = h.dprobs(i, l) * slope;
      ++rep.region;
      if (gv * gh < 0.0) ++rep.opposite;
    }
  }
  return rep;
}

FloorReport anti_starvation(const std::vector<nlohmann::json>& lines, const OpdaConfig& cfg) {
  FloorReport rep;
  rep.min_slack = std::numeric_limits<double>::infinity();
  for (const auto& l : lines) {
    if (!l.contains("epoch") || !l.contains("controller")) continue;
    const auto& c = l.at("controller");
    if (!c.contains("B")) continue;
    const double floor = c.at("B").get<double>() * cfg.pi_min(l.at("ESS_t").get<double>());
    const double lv = c.at("lambda_v").get<double>();
    const double lh = c.at("lambda_h").get<double>();
    ++rep.epochs;
    if (lv < floor || lh < floor) ++rep.violations;
    rep.min_slack = std::min(rep.min_slack, std::min(lv, lh) - floor);
  }
  return rep;
}

double allocation_grid_minimizer(double d_v, double d_h, double step) {
  double best = 0.0, best_val = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(std::lround(1.0 / step));
  for (int k = 0; k <= n; ++k) {
    const double pi = k * step;
    const double val = d_v * (pi - 1.0) * (pi - 1.0) + d_h * pi * pi;
    if (val < best_val) {
      best_val = val;
      best = pi;
    }
  }
  return best;
}

AllocationReport allocation_vs_grid(int cases, double step, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  AllocationReport rep;
  const OpdaConfig cfg;
  for (int i = 0; i < cases; ++i) {
    const double dv = u(rng), dh = u(rng);
    Ema fresh;
    const double closed = allocate(dv, dh, 1.0, fresh, cfg).pi_star;
    rep.max_error = std::max(rep.max_error, std::abs(closed - allocation_grid_minimizer(dv, dh, step)));
    ++rep.cases;
  }
  return rep;
}

RegretCurve quadratic_regret(const std::vector<int>& horizons, double u1, double u_star) {
  const OpdaConfig cfg;
  auto loss = [u_star](int) {
    return ConvexLoss{[u_star](double u) { return (u - u_star) * (u - u_star); },
                      [u_star](double u) { return 2.0 * (u - u_star); }};
  };
  return regret_bench(loss, horizons, u1, [](int t) { return 1.0 / std::sqrt(static_cast<double>(t)); },
                      cfg.log_floor(), cfg.log_cap());
}

std::vector<CheckResult> verify_all(std::uint64_t seed) {
  std::vector<CheckResult> out;
  for (double tau : {0.7, 0.95}) {
    const FlatnessReport f = dead_band_flatness(tau, 9, seed);
    out.push_back({"dead-band flatness tau=" + fmt(tau),
                   f.max_loss == 0.0 && f.max_grad_norm == 0.0 && f.max_fd < 1e-8,
                   "loss " + fmt(f.max_loss) + ", |grad| " + fmt(f.max_grad_norm) + ", max|FD| " + fmt(f.max_fd)});
  }
  const SignConflictReport s = sign_conflict(0.95, 0.8, seed);
  out.push_back({"V/H logit-sign conflict", s.region > 0 && s.fraction() > 0.9,
                 std::to_string(s.opposite) + "/" + std::to_string(s.region) + " opposite"});

  OpdaController ctl;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<nlohmann::json> lines;
  for (int t = 1; t <= 200; ++t) {
    EpochSignals sig{u01(rng), u01(rng), u01(rng), u01(rng), 1.0 + 200.0 * u01(rng), 2 * u01(rng) - 1,
                     2 * u01(rng) - 1};
    ctl.step(sig);
    lines.push_back({{"epoch", t}, {"ESS_t", sig.ess}, {"controller", ctl.last_trace().to_json()}});
  }
  const FloorReport fl = anti_starvation(lines);
  out.push_back({"anti-starvation floor (random signals)", fl.violations == 0,
                 std::to_string(fl.violations) + " violations over " + std::to_string(fl.epochs) + " epochs"});

  const AllocationReport a = allocation_vs_grid(1000, 1e-4, seed);
  out.push_back({"allocation closed form vs grid", a.max_error <= 1e-3, "max error " + fmt(a.max_error)});

  const RegretCurve rc = quadratic_regret({100, 1000, 10000});
  bool decreasing = true;
  for (size_t i = 1; i < rc.points.size(); ++i) decreasing &= rc.points[i].average < rc.points[i - 1].average;
  const double last = rc.points.back().average;
  out.push_back({"regret average decreasing", decreasing && last < 0.05 * rc.first_loss,
                 "R(1e4)/1e4 = " + fmt(last) + ", loss_1(u_1) = " + fmt(rc.first_loss)});
  return out;
}

}  // namespace fairssl
