#include "fairssl/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fairssl {

GroupMoments GroupMoments::compute(const Matrix& values, const std::vector<int>& groups, int num_groups) {
  GroupMoments m;
  const Eigen::Index L = values.cols();
  m.overall = Vector::Zero(L);
  m.groups.assign(num_groups, Vector::Zero(L));
  m.counts.assign(num_groups, 0);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    const int k = groups[i];
    m.groups[k] += values.row(i).transpose();
    m.overall += values.row(i).transpose();
    ++m.counts[k];
  }
  if (values.rows() > 0) m.overall /= static_cast<double>(values.rows());
  for (int k = 0; k < num_groups; ++k) {
    if (m.counts[k] > 0) m.groups[k] /= static_cast<double>(m.counts[k]);
  }
  return m;
}

PenaltyValue simfair_penalty(const Matrix& probs, const std::vector<int>& groups, int num_groups,
                             const Matrix& mask, const FairnessOptions& options) {
  if (num_groups < 2) throw ConfigError("fairness penalty needs K >= 2 groups");
  const Eigen::Index n = probs.rows();
  const Eigen::Index L = probs.cols();
  if (static_cast<Eigen::Index>(groups.size()) != n) throw ConfigError("groups length does not match rows");
  const Matrix gate = options.gated ? mask : Matrix::Ones(n, L);
  if (gate.rows() != n || gate.cols() != L) throw ConfigError("mask shape does not match probabilities");

  Vector count_all = Vector::Zero(L), sum_all = Vector::Zero(L);
  Matrix count_k = Matrix::Zero(num_groups, L), sum_k = Matrix::Zero(num_groups, L);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = groups[i];
    for (Eigen::Index l = 0; l < L; ++l) {
      if (gate(i, l) == 0.0) continue;
      count_all(l) += 1.0;
      sum_all(l) += probs(i, l);
      count_k(k, l) += 1.0;
      sum_k(k, l) += probs(i, l);
    }
  }

  PenaltyValue out;
  out.dprobs = Matrix::Zero(n, L);
  Vector g_overall = Vector::Zero(L);
  Matrix g_group = Matrix::Zero(num_groups, L);
  int terms = 0;
  for (int k = 0; k < num_groups; ++k) {
    Vector diff = Vector::Zero(L);
    int valid = 0;
    for (Eigen::Index l = 0; l < L; ++l) {
      if (count_k(k, l) == 0.0) {
        ++out.skipped_terms;
        continue;
      }
      diff(l) = sum_all(l) / count_all(l) - sum_k(k, l) / count_k(k, l);
      ++valid;
    }
    if (valid == 0) continue;
    ++terms;
    const double norm = diff.norm();
    if (options.squared) {
      out.value += norm * norm;
      g_overall += 2.0 * diff;
      g_group.row(k) = -2.0 * diff.transpose();
    } else {
      out.value += norm;
      if (norm > 0.0) {
        g_overall += diff / norm;
        g_group.row(k) = -(diff / norm).transpose();
      }
    }
  }
  out.degenerate = terms == 0;
  if (out.degenerate) return out;

  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = groups[i];
    for (Eigen::Index l = 0; l < L; ++l) {
      if (gate(i, l) == 0.0) continue;
      out.dprobs(i, l) = g_overall(l) / count_all(l) + g_group(k, l) / count_k(k, l);
    }
  }
  return out;
}

PenaltyValue entropy_penalty(const Matrix& probs) {
  PenaltyValue out;
  out.dprobs = Matrix::Zero(probs.rows(), probs.cols());
  const double count = static_cast<double>(probs.size());
  if (count == 0.0) return out;
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index l = 0; l < probs.cols(); ++l) {
      const double raw = probs(i, l);
      const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
      total += -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
      if (p == raw) out.dprobs(i, l) = std::log((1.0 - p) / p) / count;
    }
  }
  out.value = total / count;
  return out;
}

double dp_gap(const Matrix& hard, const std::vector<int>& groups, int num_groups) {
  if (num_groups < 2) throw ConfigError("dp_gap needs K >= 2 groups");
  const GroupMoments m = GroupMoments::compute(hard, groups, num_groups);
  double gap = 0.0;
  for (int k = 0; k < num_groups; ++k) {
    if (m.counts[k] == 0) throw ConfigError("dp_gap: group " + std::to_string(k) + " is empty");
    gap += (m.overall - m.groups[k]).norm();
  }
  return gap;
}

GapResult conditional_gap(const Matrix& hard, const Matrix& Y, const std::vector<int>& groups, int num_groups,
                          double outcome) {
  if (num_groups < 2) throw ConfigError("conditional gap needs K >= 2 groups");
  const Eigen::Index L = hard.cols();
  Vector count_all = Vector::Zero(L), sum_all = Vector::Zero(L);
  Matrix count_k = Matrix::Zero(num_groups, L), sum_k = Matrix::Zero(num_groups, L);
  for (Eigen::Index i = 0; i < hard.rows(); ++i) {
    for (Eigen::Index l = 0; l < L; ++l) {
      if (Y(i, l) != outcome) continue;
      count_all(l) += 1.0;
      sum_all(l) += hard(i, l);
      count_k(groups[i], l) += 1.0;
      sum_k(groups[i], l) += hard(i, l);
    }
  }
  if (count_all.sum() == 0.0) {
    throw ConfigError(outcome == 1.0 ? "no positive labels: equal-opportunity gap undefined"
                                     : "no negative labels: conditional gap undefined");
  }
  GapResult out;
  for (int k = 0; k < num_groups; ++k) {
    double sq = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) {
      if (count_k(k, l) == 0.0) {
        ++out.skipped_terms;
        continue;
      }
      const double d = sum_all(l) / count_all(l) - sum_k(k, l) / count_k(k, l);
      sq += d * d;
    }
    out.value += std::sqrt(sq);
  }
  return out;
}

GapResult eop_gap(const Matrix& hard, const Matrix& Y, const std::vector<int>& groups, int num_groups) {
  return conditional_gap(hard, Y, groups, num_groups, 1.0);
}

GapResult eod_gap(const Matrix& hard, const Matrix& Y, const std::vector<int>& groups, int num_groups) {
  const GapResult pos = conditional_gap(hard, Y, groups, num_groups, 1.0);
  const GapResult neg = conditional_gap(hard, Y, groups, num_groups, 0.0);
  return {0.5 * (pos.value + neg.value), pos.skipped_terms + neg.skipped_terms};
}

Thresholds rescale_thresholds(const Matrix& scores_val, const Matrix& Y_val) {
  const Eigen::Index n = scores_val.rows();
  Thresholds t;
  for (Eigen::Index l = 0; l < scores_val.cols(); ++l) {
    const double prevalence = n > 0 ? Y_val.col(l).mean() : 0.0;
    const double lo = n > 0 ? scores_val.col(l).minCoeff() : 0.0;
    const double hi = n > 0 ? scores_val.col(l).maxCoeff() : 0.0;
    if (prevalence <= 0.0 || prevalence >= 1.0 || hi == lo) {
      t.values.push_back(0.5);
      t.fallback.push_back(true);
      continue;
    }
    std::vector<double> sorted(scores_val.col(l).data(), scores_val.col(l).data() + n);
    std::sort(sorted.begin(), sorted.end());
    const auto positives = static_cast<Eigen::Index>(std::llround(prevalence * static_cast<double>(n)));
    const Eigen::Index idx = std::clamp<Eigen::Index>(n - positives, 0, n - 1);
    t.values.push_back(sorted[idx]);
    t.fallback.push_back(false);
  }
  return t;
}

Thresholds fixed_thresholds(int labels, double value) {
  return {std::vector<double>(labels, value), std::vector<bool>(labels, false)};
}

Matrix binarize(const Matrix& scores, const Thresholds& t) {
  Matrix out(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (Eigen::Index l = 0; l < scores.cols(); ++l) out(i, l) = scores(i, l) >= t.values[l] ? 1.0 : 0.0;
  }
  return out;
}

Matrix binarize(const Matrix& scores, double t) {
  return scores.unaryExpr([t](double s) { return s >= t ? 1.0 : 0.0; });
}

F1Result f1_scores(const Matrix& preds, const Matrix& Y) {
  if (preds.rows() != Y.rows() || preds.cols() != Y.cols()) throw ConfigError("f1: shape mismatch");
  F1Result r;
  double TP = 0, FP = 0, FN = 0;
  for (Eigen::Index l = 0; l < preds.cols(); ++l) {
    double tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < preds.rows(); ++i) {
      const bool p = preds(i, l) != 0.0;
      const bool y = Y(i, l) != 0.0;
      tp += (p && y);
      fp += (p && !y);
      fn += (!p && y);
    }
    const double denom = 2 * tp + fp + fn;
    r.per_label.push_back(denom > 0 ? 2 * tp / denom : 0.0);
    r.empty_label.push_back(denom == 0);
    TP += tp;
    FP += fp;
    FN += fn;
  }
  if (!r.per_label.empty()) {
    r.macro = std::accumulate(r.per_label.begin(), r.per_label.end(), 0.0) / static_cast<double>(r.per_label.size());
  }
  const double denom = 2 * TP + FP + FN;
  r.micro = denom > 0 ? 2 * TP / denom : 0.0;
  return r;
}

double macro_f1(const Matrix& preds, const Matrix& Y) { return f1_scores(preds, Y).macro; }
double micro_f1(const Matrix& preds, const Matrix& Y) { return f1_scores(preds, Y).micro; }

SaturationResult saturation_detect(const Matrix& probs) {
  if (probs.rows() < 30) throw ConfigError("saturation_detect needs at least 30 rows");
  SaturationResult r;
  int flat = 0;
  for (Eigen::Index l = 0; l < probs.cols(); ++l) {
    const double mean = probs.col(l).mean();
    const double var = (probs.col(l).array() - mean).square().mean();
    const double sd = std::sqrt(var);
    r.per_label_std.push_back(sd);
    if (sd < kSaturationStd) ++flat;
  }
  r.saturated = probs.cols() > 0 && 2 * flat >= probs.cols();
  return r;
}

namespace {

// max_k rate - min_k rate over groups that have rows in the stratum.
double rate_range(const Vector& hard, const Vector* y, double outcome, const std::vector<int>& groups,
                  int num_groups) {
  std::vector<double> pos(num_groups, 0.0), cnt(num_groups, 0.0);
  for (Eigen::Index i = 0; i < hard.size(); ++i) {
    if (y != nullptr && (*y)(i) != outcome) continue;
    cnt[groups[i]] += 1.0;
    pos[groups[i]] += hard(i);
  }
  double lo = 1.0, hi = 0.0;
  bool any = false;
  for (int k = 0; k < num_groups; ++k) {
    if (cnt[k] == 0.0) continue;
    any = true;
    lo = std::min(lo, pos[k] / cnt[k]);
    hi = std::max(hi, pos[k] / cnt[k]);
  }
  return any ? hi - lo : 0.0;
}

}  // namespace

Decomposition decompose(const Matrix& hard, const Matrix& probs, const Matrix& Y, const std::vector<int>& groups,
                        int num_groups, int primary_dim) {
  if (primary_dim < 0 || primary_dim >= hard.cols()) {
    throw ConfigError("primary dimension " + std::to_string(primary_dim) + " out of range [0, " +
                      std::to_string(hard.cols()) + ")");
  }
  Decomposition d;
  d.primary_dim = primary_dim;
  const F1Result f1 = f1_scores(hard, Y);
  d.per_dim_f1 = f1.per_label;
  for (Eigen::Index l = 0; l < hard.cols(); ++l) d.per_dim_dp.push_back(dp_gap(hard.col(l), groups, num_groups));

  const Vector primary_hard = binarize(probs.col(primary_dim), 0.5);
  const Vector primary_y = Y.col(primary_dim);
  d.binary_dp = rate_range(primary_hard, nullptr, 0.0, groups, num_groups);
  d.binary_eod = std::max(rate_range(primary_hard, &primary_y, 1.0, groups, num_groups),
                          rate_range(primary_hard, &primary_y, 0.0, groups, num_groups));
  return d;
}

nlohmann::json MetricReport::to_json() const {
  return {
      {"macro_f1", macro_f1},
      {"micro_f1", micro_f1},
      {"dp_gap", dp_gap},
      {"eop_gap", eop_gap},
      {"eod_gap", eod_gap},
      {"per_dim_dp", decomposition.per_dim_dp},
      {"per_dim_f1", decomposition.per_dim_f1},
      {"primary_dim", decomposition.primary_dim},
      {"binary_dp", decomposition.binary_dp},
      {"binary_eod", decomposition.binary_eod},
      {"saturated", saturated},
      {"flags", flags},
  };
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.macro_f1 = j.at("macro_f1");
  r.micro_f1 = j.at("micro_f1");
  r.dp_gap = j.at("dp_gap");
  r.eop_gap = j.at("eop_gap");
  r.eod_gap = j.at("eod_gap");
  r.decomposition.per_dim_dp = j.at("per_dim_dp").get<std::vector<double>>();
  r.decomposition.per_dim_f1 = j.at("per_dim_f1").get<std::vector<double>>();
  r.decomposition.primary_dim = j.at("primary_dim");
  r.decomposition.binary_dp = j.at("binary_dp");
  r.decomposition.binary_eod = j.at("binary_eod");
  r.saturated = j.at("saturated");
  r.flags = j.at("flags").get<std::vector<std::string>>();
  return r;
}

MetricReport evaluate(const Matrix& probs, const Matrix& Y, const std::vector<int>& groups, int num_groups,
                      const Thresholds& thresholds, int primary_dim) {
  MetricReport r;
  const Matrix hard = binarize(probs, thresholds);
  const F1Result f1 = f1_scores(hard, Y);
  r.macro_f1 = f1.macro;
  r.micro_f1 = f1.micro;
  for (std::size_t l = 0; l < f1.empty_label.size(); ++l) {
    if (f1.empty_label[l]) r.flags.push_back("f1_empty_label_" + std::to_string(l));
  }
  for (std::size_t l = 0; l < thresholds.fallback.size(); ++l) {
    if (thresholds.fallback[l]) r.flags.push_back("threshold_fallback_" + std::to_string(l));
  }
  r.dp_gap = dp_gap(hard, groups, num_groups);
  try {
    const GapResult eop = eop_gap(hard, Y, groups, num_groups);
    r.eop_gap = eop.value;
    if (eop.skipped_terms > 0) r.flags.push_back("eop_skipped_terms");
    const GapResult eod = eod_gap(hard, Y, groups, num_groups);
    r.eod_gap = eod.value;
    if (eod.skipped_terms > 0) r.flags.push_back("eod_skipped_terms");
  } catch (const ConfigError&) {
    r.flags.push_back("eop_undefined");
  }
  r.decomposition = decompose(hard, probs, Y, groups, num_groups, primary_dim);
  if (probs.rows() >= 30) r.saturated = saturation_detect(probs).saturated;
  return r;
}

}  // namespace fairssl
