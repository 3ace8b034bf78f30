#include "fairssl/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fairssl/data.hpp"

namespace fairssl {

int OpdaConfig::window() const { return std::clamp(warmup, 10, 30); }

double OpdaConfig::eta(int t) const { return eta0 / std::sqrt(static_cast<double>(std::max(1, t - warmup))); }

double OpdaConfig::leak(int t) const { return 1.0 / std::sqrt(1.0 + t); }

double OpdaConfig::pi_min(double ess) const { return 1.0 / (10.0 + 2.0 * std::max(1.0, ess)); }

double OpdaConfig::log_floor() const { return std::log(b_min + eps_b); }

double OpdaConfig::log_cap() const { return std::log(b_max_soft); }

void OpdaConfig::validate() const {
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must lie in [0, 1)");
  if (warmup < 1) throw ConfigError("warmup must be at least one epoch");
  if (window() < 2) throw ConfigError("rolling window must hold at least two deltas");
  if (!(gate_beta > 0.0)) throw ConfigError("gate sharpness must be positive");
  if (!(noise_k >= 0.0)) throw ConfigError("noise margin multiplier must be nonnegative");
  if (!(b_min >= 0.0) || !(eps_b > 0.0) || !(b_max_soft > b_min + eps_b)) {
    throw ConfigError("budget bounds must satisfy 0 <= B_min < B_min + eps_B < B_max_soft");
  }
  if (!(b_warm_init > 0.0)) throw ConfigError("warmup budget must be positive");
  if (!(eta0 > 0.0) || !(eps_alloc > 0.0) || !(stabilization > 0.0)) {
    throw ConfigError("eta0, eps_alloc and stabilization must be positive");
  }
}

nlohmann::json OpdaConfig::to_json() const {
  return {{"rho", rho},         {"warmup", warmup},         {"noise_k", noise_k},
          {"gate_beta", gate_beta}, {"b_min", b_min},       {"eps_b", eps_b},
          {"b_max_soft", b_max_soft}, {"eta0", eta0},       {"eps_alloc", eps_alloc},
          {"b_warm_init", b_warm_init}, {"stabilization", stabilization}};
}

OpdaConfig OpdaConfig::from_json(const nlohmann::json& j) {
  OpdaConfig c;
  c.rho = j.value("rho", c.rho);
  c.warmup = j.value("warmup", c.warmup);
  c.noise_k = j.value("noise_k", c.noise_k);
  c.gate_beta = j.value("gate_beta", c.gate_beta);
  c.b_min = j.value("b_min", c.b_min);
  c.eps_b = j.value("eps_b", c.eps_b);
  c.b_max_soft = j.value("b_max_soft", c.b_max_soft);
  c.eta0 = j.value("eta0", c.eta0);
  c.eps_alloc = j.value("eps_alloc", c.eps_alloc);
  c.b_warm_init = j.value("b_warm_init", c.b_warm_init);
  c.stabilization = j.value("stabilization", c.stabilization);
  c.validate();
  return c;
}

void EpochSignals::validate() const {
  auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!std::isfinite(v) || v < 0.0) throw ConfigError("signal v_t must be finite and >= 0");
  if (!in01(r) || !in01(q) || !in01(p)) throw ConfigError("signals r_t, q_t, p_t must lie in [0, 1]");
  if (!(ess >= 1.0) || !std::isfinite(ess)) throw ConfigError("ESS_t must be finite and >= 1");
  if (!(cos_v >= -1.0 && cos_v <= 1.0) || !(cos_h >= -1.0 && cos_h <= 1.0)) {
    throw ConfigError("alignment cosines must lie in [-1, 1]");
  }
}

double Ema::update(double x, double rho) {
  value = initialized ? ema(value, x, rho) : x;
  initialized = true;
  return value;
}

double ema(double prev, double x, double rho) { return rho * prev + (1.0 - rho) * x; }

double noise_margin(const std::deque<double>& window, double k) {
  if (window.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : window) mean += x;
  mean /= static_cast<double>(window.size());
  double ss = 0.0;
  for (double x : window) ss += (x - mean) * (x - mean);
  return k * std::sqrt(ss / static_cast<double>(window.size() - 1));
}

GainCost gain_cost(double delta_v, double delta_r, double margin_v, double margin_r) {
  GainCost g;
  g.gain = std::max(0.0, -delta_v - margin_v);
  g.cost = std::max(0.0, delta_r - margin_r);
  g.signal = g.gain - g.cost;
  return g;
}

double log_budget_step(double u, double eta, double signal, double leak, double anchor, double lo, double hi) {
  return std::clamp(u + eta * signal - leak * (u - anchor), lo, hi);
}

double gate(double c, double beta) { return 1.0 / (1.0 + std::exp(-beta * c)); }

BudgetStep budget_update(const OpdaState& state, double s, double eta, double margin_v, double margin_r,
                         const OpdaConfig& cfg) {
  BudgetStep out{state.u, state.budget, 0.0, false};
  if (!std::isfinite(s) || !std::isfinite(margin_v) || !std::isfinite(margin_r)) {
    out.frozen = true;
    return out;
  }
  const double s_max = cfg.stabilization * (margin_v + margin_r + 1e-8);
  out.s_tilde = std::clamp(s, -s_max, s_max);
  out.u = log_budget_step(state.u, eta, out.s_tilde, cfg.leak(state.t), state.u_warm, cfg.log_floor(),
                          cfg.log_cap());
  out.budget = std::clamp(std::exp(out.u), cfg.b_min, cfg.b_max_soft);
  return out;
}

Urgency urgencies(const OpdaState& state, const EpochSignals& sig, double gain, const OpdaConfig& cfg,
                  bool use_gates) {
  if (!state.baselines_ready) throw std::logic_error("urgencies: warmup baselines not recorded");
  const double phi_v = use_gates ? gate(sig.cos_v, cfg.gate_beta) : 1.0;
  const double phi_h = use_gates ? gate(sig.cos_h, cfg.gate_beta) : 1.0;
  Urgency u;
  u.d_v = phi_v * (state.v_bar.value + gain);
  const double deficit = std::max(0.0, state.q0 - sig.q) / std::max(state.q0, 1e-3) +
                         std::max(0.0, state.p0 - sig.p) / std::max(state.p0, 1e-3) +
                         std::max(0.0, state.ess0 - sig.ess) / std::max(state.ess0, 1.0);
  u.d_h = phi_h * deficit;
  return u;
}

Allocation allocate(double d_v, double d_h, double ess, Ema& pi_star_bar, const OpdaConfig& cfg) {
  Allocation a;
  a.pi_star = d_v / (d_v + d_h + cfg.eps_alloc);
  a.pi_star_bar = pi_star_bar.update(a.pi_star, cfg.rho);
  a.pi_min = cfg.pi_min(ess);
  a.pi = std::clamp(a.pi_star_bar, a.pi_min, 1.0 - a.pi_min);
  return a;
}

nlohmann::json ControllerTrace::to_json() const {
  auto finite_or_null = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"t", t},
          {"u", u},
          {"B", budget},
          {"pi", pi},
          {"lambda_v", lambda_v},
          {"lambda_h", lambda_h},
          {"G", gain},
          {"C", cost},
          {"s", s},
          {"s_tilde", s_tilde},
          {"d_v", d_v},
          {"d_h", d_h},
          {"m_v", finite_or_null(m_v)},
          {"m_r", finite_or_null(m_r)},
          {"c_v", c_v},
          {"c_h", c_h},
          {"pi_min", pi_min},
          {"warmup", warmup},
          {"frozen", frozen}};
}

OpdaController::OpdaController(OpdaConfig cfg, OpdaVariant variant) : cfg_(cfg), variant_(variant) {
  cfg_.validate();
  state_.budget = cfg_.b_warm_init;
  state_.u = std::log(std::max(state_.budget, cfg_.b_min + cfg_.eps_b));
  state_.pi = 0.5;
}

DualWeights OpdaController::initial_weights() const {
  return {cfg_.b_warm_init * 0.5, cfg_.b_warm_init * 0.5};
}

DualWeights OpdaController::step(const EpochSignals& sig) {
  sig.validate();
  OpdaState& st = state_;
  ++st.t;
  ControllerTrace tr;
  tr.t = st.t;
  tr.c_v = sig.cos_v;
  tr.c_h = sig.cos_h;

  const bool had_prev = st.v_bar.initialized;
  const double v_prev = st.v_bar.value;
  const double r_prev = st.r_bar.value;
  st.v_bar.update(sig.v, cfg_.rho);
  st.r_bar.update(sig.r, cfg_.rho);
  const double dv = had_prev ? st.v_bar.value - v_prev : 0.0;
  const double dr = had_prev ? st.r_bar.value - r_prev : 0.0;
  if (had_prev) {
    st.dv_window.push_back(dv);
    st.dr_window.push_back(dr);
    while (static_cast<int>(st.dv_window.size()) > cfg_.window()) st.dv_window.pop_front();
    while (static_cast<int>(st.dr_window.size()) > cfg_.window()) st.dr_window.pop_front();
  }

  if (st.t <= cfg_.warmup) {
    st.q_sum += sig.q;
    st.p_sum += sig.p;
    st.ess_sum += sig.ess;
    ++st.warm_count;
    st.budget = cfg_.b_warm_init;
    st.u = std::log(std::max(st.budget, cfg_.b_min + cfg_.eps_b));
    st.pi = 0.5;
    if (st.t == cfg_.warmup) {
      st.q0 = st.q_sum / st.warm_count;
      st.p0 = st.p_sum / st.warm_count;
      st.ess0 = st.ess_sum / st.warm_count;
      st.u_warm = st.u;
      st.baselines_ready = true;
    }
    tr.u = st.u;
    tr.budget = st.budget;
    tr.pi = st.pi;
    tr.pi_min = cfg_.pi_min(sig.ess);
    tr.lambda_v = st.budget * st.pi;
    tr.lambda_h = st.budget * (1.0 - st.pi);
    tr.warmup = true;
    trace_ = tr;
    return {tr.lambda_v, tr.lambda_h};
  }

  tr.warmup = false;
  const double m_v = noise_margin(st.dv_window, cfg_.noise_k);
  const double m_r = noise_margin(st.dr_window, cfg_.noise_k);
  const GainCost gc = gain_cost(dv, dr, m_v, m_r);
  tr.m_v = m_v;
  tr.m_r = m_r;
  tr.gain = gc.gain;
  tr.cost = gc.cost;
  tr.s = gc.signal;

  const double eta = cfg_.eta(st.t);
  if (variant_ == OpdaVariant::kFull) {
    const BudgetStep b = budget_update(st, gc.signal, eta, m_v, m_r, cfg_);
    st.u = b.u;
    st.budget = b.budget;
    tr.s_tilde = b.s_tilde;
    tr.frozen = b.frozen;
  } else if (!std::isfinite(gc.signal)) {
    tr.frozen = true;
  } else {
    // Lite: multiplicative sign rule, no leak.
    const double sign = (gc.signal > 0.0) - (gc.signal < 0.0);
    tr.s_tilde = sign;
    st.u = log_budget_step(st.u, eta, sign, 0.0, st.u_warm, cfg_.log_floor(), cfg_.log_cap());
    st.budget = std::clamp(std::exp(st.u), cfg_.b_min, cfg_.b_max_soft);
  }

  const Urgency raw = urgencies(st, sig, gc.gain, cfg_, variant_ == OpdaVariant::kFull);
  st.d_v_bar.update(raw.d_v, cfg_.rho);
  st.d_h_bar.update(raw.d_h, cfg_.rho);
  const Allocation a = allocate(st.d_v_bar.value, st.d_h_bar.value, sig.ess, st.pi_star_bar, cfg_);
  st.pi = a.pi;

  tr.u = st.u;
  tr.budget = st.budget;
  tr.pi = st.pi;
  tr.pi_min = a.pi_min;
  tr.d_v = st.d_v_bar.value;
  tr.d_h = st.d_h_bar.value;
  tr.lambda_v = st.budget * st.pi;
  // 1 - pi can round below pi_min when pi sits on the upper clip.
  tr.lambda_h = st.budget * std::max(1.0 - st.pi, a.pi_min);
  trace_ = tr;
  return {tr.lambda_v, tr.lambda_h};
}

RegretCurve regret_bench(const std::function<ConvexLoss(int)>& losses, const std::vector<int>& horizons,
                         double u1, const std::function<double(int)>& eta, double lo, double hi) {
  RegretCurve curve;
  if (horizons.empty()) return curve;
  const int T = *std::max_element(horizons.begin(), horizons.end());
  std::vector<ConvexLoss> seq;
  seq.reserve(T);
  for (int t = 1; t <= T; ++t) seq.push_back(losses(t));

  std::vector<double> incurred(T + 1, 0.0);  // prefix sums of loss_t(u_t)
  double u = std::clamp(u1, lo, hi);
  for (int t = 1; t <= T; ++t) {
    const ConvexLoss& l = seq[t - 1];
    const double value = l.value(u);
    if (t == 1) curve.first_loss = value;
    incurred[t] = incurred[t - 1] + value;
    u = log_budget_step(u, eta(t), -l.grad(u), 0.0, 0.0, lo, hi);
  }

  for (int h : horizons) {
    auto total = [&](double x) {
      double s = 0.0;
      for (int t = 0; t < h; ++t) s += seq[t].value(x);
      return s;
    };
    // Golden-section search of the convex comparator over [lo, hi].
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = total(c), fd = total(d);
    for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - inv_phi * (b - a);
        fc = total(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + inv_phi * (b - a);
        fd = total(d);
      }
    }
    const double best = std::min({total(lo), total(hi), total(0.5 * (a + b))});
    RegretPoint p;
    p.horizon = h;
    p.regret = incurred[h] - best;
    p.average = p.regret / h;
    curve.points.push_back(p);
  }
  return curve;
}

}  // namespace fairssl
