#include "fairssl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fairssl/objective.hpp"
#include "fairssl/rng.hpp"
#include "fairssl/ssl.hpp"

namespace fairssl {

namespace {

std::string fmt_num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

/// Common interface over OPDA and the single-signal schedules.
class Scheduler {
 public:
  explicit Scheduler(const RunConfig& cfg) {
    if (is_opda(cfg.method)) {
      opda_ = std::make_unique<OpdaController>(
          cfg.opda, cfg.method == Method::kOpdaLite ? OpdaVariant::kLite : OpdaVariant::kFull);
      return;
    }
    BaselineConfig b;
    switch (cfg.method) {
      case Method::kBase: b.kind = BaselineKind::kBase; break;
      case Method::kStatic: b.kind = BaselineKind::kStatic; break;
      case Method::kEmaP: b.kind = BaselineKind::kEmaP; break;
      case Method::kPi: b.kind = BaselineKind::kPi; break;
      case Method::kDualAsc: b.kind = BaselineKind::kDualAsc; break;
      default: break;
    }
    b.lambda_static = cfg.lambda_static;
    b.target_fraction = cfg.target_fraction;
    b.lambda0 = cfg.lambda0;
    b.pi_relative_error = cfg.pi_relative_error;
    b.warmup = cfg.opda.warmup;
    b.rho = cfg.opda.rho;
    baseline_ = std::make_unique<BaselineController>(b);
  }

  DualWeights initial() const { return opda_ ? opda_->initial_weights() : baseline_->initial_weights(); }

  DualWeights step(const EpochSignals& s) { return opda_ ? opda_->step(s) : baseline_->step(s.v); }

  nlohmann::json trace() const { return opda_ ? opda_->last_trace().to_json() : baseline_->trace_json(); }

 private:
  std::unique_ptr<OpdaController> opda_;
  std::unique_ptr<BaselineController> baseline_;
};

void check_finite(const GradResult& g, int epoch, int step) {
  if (!std::isfinite(g.loss) || !g.grad.values.allFinite()) {
    throw NumericalError("non-finite loss or gradient at epoch " + std::to_string(epoch) + ", step " +
                         std::to_string(step));
  }
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::kBase: return "base";
    case Method::kStatic: return "static";
    case Method::kEmaP: return "emap";
    case Method::kPi: return "pi";
    case Method::kDualAsc: return "dualasc";
    case Method::kOpda: return "opda";
    case Method::kOpdaLite: return "opda_lite";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kBase, Method::kStatic, Method::kEmaP, Method::kPi, Method::kDualAsc, Method::kOpda,
                   Method::kOpdaLite}) {
    if (name == method_name(m)) return m;
  }
  throw ConfigError("unknown method '" + name + "'");
}

bool is_opda(Method m) { return m == Method::kOpda || m == Method::kOpdaLite; }

SynthConfig synth_from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.n = j.value("n", c.n);
  c.d = j.value("d", c.d);
  c.K = j.value("K", c.K);
  c.L = j.value("L", c.L);
  c.group_mean_shift = j.value("group_mean_shift", c.group_mean_shift);
  c.signal = j.value("signal", c.signal);
  c.label_group_alignment = j.value("label_group_alignment", c.label_group_alignment);
  c.categorical_levels = j.value("categorical_levels", c.categorical_levels);
  c.group_proportions = j.value("group_proportions", c.group_proportions);
  if (j.contains("prevalence")) {
    c.prevalence = j.at("prevalence").get<std::vector<std::vector<double>>>();
  } else {
    c.prevalence.assign(c.K, std::vector<double>(c.L, 0.3));
  }
  return c;
}

nlohmann::json synth_to_json(const SynthConfig& c) {
  return {{"n", c.n},
          {"d", c.d},
          {"K", c.K},
          {"L", c.L},
          {"group_mean_shift", c.group_mean_shift},
          {"signal", c.signal},
          {"label_group_alignment", c.label_group_alignment},
          {"categorical_levels", c.categorical_levels},
          {"group_proportions", c.group_proportions},
          {"prevalence", c.prevalence}};
}

nlohmann::json DatasetSpec::to_json() const {
  nlohmann::json j{{"name", name},
                   {"data_seed", data_seed},
                   {"split_seed", split_seed},
                   {"fractions",
                    {{"labeled", fractions.labeled},
                     {"unlabeled", fractions.unlabeled},
                     {"validation", fractions.validation},
                     {"test", fractions.test}}}};
  if (synth) j["synthetic"] = synth_to_json(*synth);
  if (!csv.empty()) j["csv"] = csv.string();
  if (!schema.empty()) j["schema"] = schema.string();
  return j;
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  DatasetSpec s;
  s.name = j.value("name", s.name);
  s.data_seed = j.value("data_seed", s.data_seed);
  s.split_seed = j.value("split_seed", s.split_seed);
  if (j.contains("fractions")) {
    const auto& f = j.at("fractions");
    s.fractions.labeled = f.value("labeled", s.fractions.labeled);
    s.fractions.unlabeled = f.value("unlabeled", s.fractions.unlabeled);
    s.fractions.validation = f.value("validation", s.fractions.validation);
    s.fractions.test = f.value("test", s.fractions.test);
  }
  if (j.contains("synthetic")) s.synth = synth_from_json(j.at("synthetic"));
  if (j.contains("csv")) s.csv = resolve(j.at("csv").get<std::string>(), base_dir);
  if (j.contains("schema")) s.schema = resolve(j.at("schema").get<std::string>(), base_dir);
  if (s.synth.has_value() == !s.csv.empty()) throw ConfigError("dataset needs exactly one of 'synthetic' or 'csv'");
  if (!s.csv.empty() && s.schema.empty()) throw ConfigError("csv dataset needs a 'schema' path");
  return s;
}

TabularDataset prepare_dataset(const DatasetSpec& spec) {
  TabularDataset ds = spec.synth ? synth_generate(*spec.synth, spec.data_seed)
                                 : load_csv(spec.csv, DatasetSchema::from_json_file(spec.schema));
  return preprocess(split(std::move(ds), spec.split_seed, spec.fractions));
}

void RunConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (method != Method::kBase && method != Method::kStatic && epochs <= opda.warmup) {
    throw ConfigError("adaptive methods need epochs > warmup");
  }
  if (!(tau > 0.5 && tau < 1.0)) throw ConfigError("tau must lie in (0.5, 1)");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_labeled < 1 || batch_unlabeled < 1) throw ConfigError("batch sizes must be positive");
  if (!(lambda_u >= 0.0) || !(lambda_static >= 0.0)) throw ConfigError("lambda_u and lambda must be nonnegative");
  if (!(sigma_weak >= 0.0) || !(sigma_strong >= 0.0) || !(p_drop >= 0.0 && p_drop < 1.0)) {
    throw ConfigError("augmentation parameters out of range");
  }
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden widths must be positive");
  }
  opda.validate();
}

std::string RunConfig::setting() const {
  switch (method) {
    case Method::kStatic: return "lambda=" + fmt_num(lambda_static);
    case Method::kEmaP:
    case Method::kPi:
    case Method::kDualAsc: return "f=" + fmt_num(target_fraction);
    default: return "default";
  }
}

std::string RunConfig::run_id() const {
  return dataset.name + "_" + method_name(method) + "_" + setting() + "_s" + std::to_string(seed);
}

nlohmann::json RunConfig::to_json() const {
  return {{"dataset", dataset.to_json()},
          {"method", method_name(method)},
          {"lambda", lambda_static},
          {"target_fraction", target_fraction},
          {"lambda0", lambda0},
          {"pi_relative_error", pi_relative_error},
          {"hidden", hidden},
          {"activation", activation_name(activation)},
          {"lr", lr},
          {"batch_labeled", batch_labeled},
          {"batch_unlabeled", batch_unlabeled},
          {"tau", tau},
          {"lambda_u", lambda_u},
          {"epochs", epochs},
          {"seed", seed},
          {"sigma_weak", sigma_weak},
          {"sigma_strong", sigma_strong},
          {"p_drop", p_drop},
          {"fairness", {{"squared", fairness.squared}, {"gated", fairness.gated}}},
          {"v_signal", v_from_batches ? "batch" : "full"},
          {"primary_dim", primary_dim},
          {"opda", opda.to_json()},
          {"out_dir", out_dir.string()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  if (!j.contains("dataset")) throw ConfigError("run config needs a 'dataset'");
  const auto& d = j.at("dataset");
  if (d.is_string()) {
    const auto path = resolve(d.get<std::string>(), base_dir);
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset spec " + path.string());
    c.dataset = DatasetSpec::from_json(nlohmann::json::parse(in), path.parent_path());
  } else {
    c.dataset = DatasetSpec::from_json(d, base_dir);
  }
  c.method = parse_method(j.value("method", std::string(method_name(c.method))));
  c.lambda_static = j.value("lambda", c.lambda_static);
  c.target_fraction = j.value("target_fraction", c.target_fraction);
  c.lambda0 = j.value("lambda0", c.lambda0);
  c.pi_relative_error = j.value("pi_relative_error", c.pi_relative_error);
  c.hidden = j.value("hidden", c.hidden);
  c.activation = parse_activation(j.value("activation", std::string(activation_name(c.activation))));
  c.lr = j.value("lr", c.lr);
  c.batch_labeled = j.value("batch_labeled", c.batch_labeled);
  c.batch_unlabeled = j.value("batch_unlabeled", c.batch_unlabeled);
  c.tau = j.value("tau", c.tau);
  c.lambda_u = j.value("lambda_u", c.lambda_u);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.sigma_weak = j.value("sigma_weak", c.sigma_weak);
  c.sigma_strong = j.value("sigma_strong", c.sigma_strong);
  c.p_drop = j.value("p_drop", c.p_drop);
  if (j.contains("fairness")) {
    c.fairness.squared = j.at("fairness").value("squared", c.fairness.squared);
    c.fairness.gated = j.at("fairness").value("gated", c.fairness.gated);
  }
  if (j.contains("v_signal")) {
    const auto v = j.at("v_signal").get<std::string>();
    if (v != "batch" && v != "full") throw ConfigError("v_signal must be 'batch' or 'full', got '" + v + "'");
    c.v_from_batches = v == "batch";
  }
  c.primary_dim = j.value("primary_dim", c.primary_dim);
  if (j.contains("opda")) c.opda = OpdaConfig::from_json(j.at("opda"));
  if (j.contains("out_dir")) c.out_dir = resolve(j.at("out_dir").get<std::string>(), base_dir);
  c.validate();
  return c;
}

std::vector<nlohmann::json> RunResult::epoch_lines() const {
  std::vector<nlohmann::json> out;
  for (const auto& l : lines) {
    if (l.contains("epoch")) out.push_back(l);
  }
  return out;
}

bool masking_collapse(const std::vector<double>& q, int warmup) {
  const int n = static_cast<int>(q.size());
  if (warmup < 1 || n <= warmup) return false;
  const int tail = std::max(1, static_cast<int>(std::ceil(0.1 * n)));
  const double mean = std::accumulate(q.end() - tail, q.end(), 0.0) / tail;
  return mean < 0.05 && q[warmup - 1] >= 0.2;
}

FailureFlags detect_failures(const std::vector<double>& q, int warmup, const Matrix& final_probs) {
  FailureFlags f;
  f.masking_collapse = masking_collapse(q, warmup);
  if (final_probs.rows() >= 30) f.trivial_saturation = saturation_detect(final_probs).saturated;
  return f;
}

void write_jsonl(const std::vector<nlohmann::json>& lines, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l.dump() << '\n';
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<nlohmann::json> lines;
  std::string s;
  while (std::getline(in, s)) {
    if (!s.empty()) lines.push_back(nlohmann::json::parse(s));
  }
  return lines;
}

RunResult train_run(const RunConfig& cfg, const TabularDataset& data, const TrainHooks& hooks) {
  cfg.validate();
  if (!data.has_splits()) throw ConfigError("dataset has no split assignment");
  if (data.num_groups < 2) throw ConfigError("dataset needs at least two sensitive groups");
  if (cfg.primary_dim < 0 || cfg.primary_dim >= data.outputs()) throw ConfigError("primary_dim out of range");

  const std::vector<int> lab = data.indices(SplitTag::kLabeled);
  const std::vector<int> unl = data.indices(SplitTag::kUnlabeled);
  const std::vector<int> val = data.indices(SplitTag::kValidation);
  const std::vector<int> tst = data.indices(SplitTag::kTest);
  if (lab.empty() || unl.empty() || val.empty() || tst.empty()) throw ConfigError("every split must be nonempty");

  const Matrix Xl = take_rows(data.X, lab), Yl = take_rows(data.Y, lab);
  const Matrix Xu = take_rows(data.X, unl);
  const std::vector<int> gu = take(data.groups, unl);
  const Matrix Xv = take_rows(data.X, val);
  Matrix Yv = take_rows(data.Y, val);
  const Matrix Xt = take_rows(data.X, tst), Yt = take_rows(data.Y, tst);
  const std::vector<int> gt = take(data.groups, tst);
  const int K = data.num_groups;
  if (hooks.perturb_validation) hooks.perturb_validation(Yv);

  std::vector<int> dims{data.features()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(data.outputs());

  RunResult res;
  auto init_rng = make_rng(cfg.seed, 0, RngPurpose::kInit);
  res.params = init(dims, init_rng(), cfg.activation);
  AdamState adam;
  Scheduler sched(cfg);
  DualWeights w = sched.initial();
  std::vector<double> q_hist;

  const nlohmann::json header{{"run_id", cfg.run_id()},
                              {"method", method_name(cfg.method)},
                              {"setting", cfg.setting()},
                              {"dataset", cfg.dataset.name},
                              {"seed", cfg.seed},
                              {"config", cfg.to_json()}};
  res.lines.push_back(header);

  try {
    std::vector<int> uorder(Xu.rows()), lorder(Xl.rows());
    std::iota(uorder.begin(), uorder.end(), 0);
    std::iota(lorder.begin(), lorder.end(), 0);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      res.lambdas.push_back(w);
      ObjectiveConfig oc;
      oc.tau = cfg.tau;
      oc.lambda_u = cfg.lambda_u;
      oc.lambda_v = w.lambda_v;
      oc.lambda_h = w.lambda_h;
      oc.fairness = cfg.fairness;

      auto shuffle_rng = make_rng(cfg.seed, epoch, RngPurpose::kShuffle);
      std::shuffle(uorder.begin(), uorder.end(), shuffle_rng);
      std::shuffle(lorder.begin(), lorder.end(), shuffle_rng);
      auto weak_rng = make_rng(cfg.seed, epoch, RngPurpose::kWeakView);
      auto strong_rng = make_rng(cfg.seed, epoch, RngPurpose::kStrongView);

      double sup_sum = 0.0, unsup_sum = 0.0, v_sum = 0.0;
      int steps = 0;
      size_t lcursor = 0;
      for (size_t begin = 0; begin < uorder.size(); begin += cfg.batch_unlabeled, ++steps) {
        const size_t end = std::min(uorder.size(), begin + static_cast<size_t>(cfg.batch_unlabeled));
        const std::vector<int> urows(uorder.begin() + begin, uorder.begin() + end);
        std::vector<int> lrows;
        for (int c = 0; c < cfg.batch_labeled; ++c) {
          lrows.push_back(lorder[lcursor]);
          lcursor = (lcursor + 1) % lorder.size();
        }
        Batch b;
        b.x_labeled = take_rows(Xl, lrows);
        b.y_labeled = take_rows(Yl, lrows);
        const Matrix xu = take_rows(Xu, urows);
        b.x_weak = augment_weak(xu, data.continuous, weak_rng, cfg.sigma_weak);
        b.x_strong = augment_strong(xu, data.continuous, strong_rng, cfg.sigma_strong, cfg.p_drop);
        b.groups = take(gu, urows);
        b.num_groups = K;
        const GradResult g = grad_of(res.params, b, LossSelector::kTotal, oc);
        check_finite(g, epoch, steps);
        if (hooks.on_step) hooks.on_step(epoch, steps, w, g.grad);
        adam_step(res.params, g.grad, adam, cfg.lr);
        sup_sum += g.parts.sup;
        unsup_sum += g.parts.unsup;
        v_sum += g.parts.fairness;
      }

      // End-of-epoch signals on the full unlabeled split.
      auto sig_rng = make_rng(cfg.seed, epoch, RngPurpose::kSignals);
      const Matrix pw = forward(res.params, augment_weak(Xu, data.continuous, sig_rng, cfg.sigma_weak)).probs;
      const Matrix ps =
          forward(res.params, augment_strong(Xu, data.continuous, sig_rng, cfg.sigma_strong, cfg.p_drop)).probs;
      const GateMask gate = confidence_gate(pw, cfg.tau);
      const HealthSignals hs = health_signals(gate, pw, ps);
      const PenaltyValue v = simfair_penalty(pw, gu, K, gate.mask, cfg.fairness);
      const double h = entropy_penalty(pw).value;
      const Matrix pv = forward(res.params, Xv).probs;
      const double val_f1 = macro_f1(binarize(pv, 0.5), Yv);

      auto align_rng = make_rng(cfg.seed, epoch, RngPurpose::kAlignment);
      std::vector<int> arows(uorder), alrows(lorder);
      std::shuffle(arows.begin(), arows.end(), align_rng);
      std::shuffle(alrows.begin(), alrows.end(), align_rng);
      arows.resize(std::min(arows.size(), static_cast<size_t>(cfg.batch_unlabeled)));
      alrows.resize(std::min(alrows.size(), static_cast<size_t>(cfg.batch_labeled)));
      Batch ab;
      ab.x_labeled = take_rows(Xl, alrows);
      ab.y_labeled = take_rows(Yl, alrows);
      const Matrix xa = take_rows(Xu, arows);
      ab.x_weak = augment_weak(xa, data.continuous, align_rng, cfg.sigma_weak);
      ab.x_strong = augment_strong(xa, data.continuous, align_rng, cfg.sigma_strong, cfg.p_drop);
      ab.groups = take(gu, arows);
      ab.num_groups = K;
      const AlignmentGrads ag = alignment_grads(res.params, ab, oc);

      EpochSignals sig;
      sig.v = cfg.v_from_batches ? v_sum / steps : v.value;
      sig.r = std::clamp(1.0 - val_f1, 0.0, 1.0);
      sig.q = hs.pass_ratio;
      sig.p = hs.proxy_accuracy;
      sig.ess = std::max(1.0, hs.ess);
      sig.cos_v = std::clamp(ag.cos_fairness, -1.0, 1.0);
      sig.cos_h = std::clamp(ag.cos_entropy, -1.0, 1.0);
      if (!std::isfinite(sig.v) || !std::isfinite(h)) throw NumericalError("non-finite epoch signal");
      res.signals.push_back(sig);
      q_hist.push_back(sig.q);

      const DualWeights next = sched.step(sig);
      nlohmann::json line{{"epoch", epoch},
                          {"sup_loss", sup_sum / steps},
                          {"unsup_loss", unsup_sum / steps},
                          {"v_t", sig.v},
                          {"H_t", h},
                          {"r_t", sig.r},
                          {"q_t", sig.q},
                          {"p_t", sig.p},
                          {"ESS_t", sig.ess},
                          {"cos_v", sig.cos_v},
                          {"cos_h", sig.cos_h},
                          {"lambda_v", w.lambda_v},
                          {"lambda_h", w.lambda_h},
                          {"next_lambda_v", next.lambda_v},
                          {"next_lambda_h", next.lambda_h},
                          {"proxy_degenerate", hs.proxy_degenerate},
                          {"controller", sched.trace()},
                          {"val", {{"macro_f1", val_f1}}}};
      res.lines.push_back(std::move(line));
      w = next;
    }

    const Matrix pv = forward(res.params, Xv).probs;
    res.test_probs = forward(res.params, Xt).probs;
    res.test = evaluate(res.test_probs, Yt, gt, K, rescale_thresholds(pv, Yv), cfg.primary_dim);
    res.failures = detect_failures(q_hist, cfg.opda.warmup, res.test_probs);
    res.completed = true;
    res.lines.push_back({{"final", true},
                         {"status", "completed"},
                         {"test", res.test.to_json()},
                         {"failures",
                          {{"masking_collapse", res.failures.masking_collapse},
                           {"trivial_saturation", res.failures.trivial_saturation}}}});
  } catch (const NumericalError& e) {
    res.completed = false;
    res.error = e.what();
  }

  if (!cfg.out_dir.empty()) {
    write_jsonl(res.lines, cfg.out_dir / (cfg.run_id() + ".jsonl"));
    if (!res.completed) {
      std::ofstream(cfg.out_dir / (cfg.run_id() + ".failed")) << res.error << '\n';
    }
  }
  return res;
}

RunResult train_run(const RunConfig& cfg) { return train_run(cfg, prepare_dataset(cfg.dataset)); }

}  // namespace fairssl
