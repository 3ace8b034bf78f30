#include "fairssl/objective.hpp"

namespace fairssl {

namespace {

struct TermWeights {
  double sup = 0.0;
  double unsup = 0.0;
  double fairness = 0.0;
  double entropy = 0.0;
};

TermWeights weights_for(LossSelector s, const ObjectiveConfig& cfg) {
  switch (s) {
    case LossSelector::kSup: return {1.0, 0.0, 0.0, 0.0};
    case LossSelector::kUnsup: return {0.0, 1.0, 0.0, 0.0};
    case LossSelector::kFairness: return {0.0, 0.0, 1.0, 0.0};
    case LossSelector::kEntropy: return {0.0, 0.0, 0.0, 1.0};
    case LossSelector::kTotal: return {1.0, cfg.lambda_u, cfg.lambda_v, cfg.lambda_h};
  }
  return {};
}

bool needs_labeled(LossSelector s) { return s == LossSelector::kSup || s == LossSelector::kTotal; }
bool needs_unlabeled(LossSelector s) { return s != LossSelector::kSup; }
bool needs_groups(LossSelector s) { return s == LossSelector::kFairness || s == LossSelector::kTotal; }

// Chain rule through the logistic: dL/dz = dL/dp * p (1 - p).
Matrix through_logistic(const Matrix& dprobs, const Matrix& probs) {
  return dprobs.cwiseProduct(probs.cwiseProduct((1.0 - probs.array()).matrix()));
}

GradResult evaluate(const MlpParams& params, const Batch& batch, LossSelector selector, const ObjectiveConfig& cfg,
                    bool with_grad) {
  const TermWeights w = weights_for(selector, cfg);
  if (needs_labeled(selector) && batch.x_labeled.rows() == 0) {
    throw ConfigError(std::string("selector '") + selector_name(selector) + "' needs labeled rows");
  }
  if (needs_unlabeled(selector) && batch.x_weak.rows() == 0) {
    throw ConfigError(std::string("selector '") + selector_name(selector) + "' needs unlabeled rows");
  }
  if (needs_groups(selector) &&
      (batch.num_groups < 2 || static_cast<Eigen::Index>(batch.groups.size()) != batch.x_weak.rows())) {
    throw ConfigError(std::string("selector '") + selector_name(selector) + "' needs group data");
  }

  GradResult out;
  out.grad = GradVector::zeros(params.count());

  if (needs_labeled(selector)) {
    const ForwardResult fl = forward(params, batch.x_labeled);
    const double denom = static_cast<double>(fl.logits.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < fl.logits.rows(); ++i) {
      for (Eigen::Index l = 0; l < fl.logits.cols(); ++l) total += bce_with_logits(fl.logits(i, l), batch.y_labeled(i, l));
    }
    out.parts.sup = total / denom;
    if (with_grad) out.grad += backward(params, fl.cache, (fl.probs - batch.y_labeled) / denom);
  }

  if (needs_unlabeled(selector)) {
    const ForwardResult fw = forward(params, batch.x_weak);
    out.gate = batch.gate ? *batch.gate : confidence_gate(fw.probs, cfg.tau);

    if (w.unsup != 0.0 || selector == LossSelector::kUnsup) {
      const ForwardResult fs = forward(params, batch.x_strong);
      const LossValue u = unsup_loss(fs.logits, out.gate.pseudo, out.gate.mask);
      out.parts.unsup = u.value;
      if (with_grad && w.unsup != 0.0) out.grad += backward(params, fs.cache, w.unsup * u.dlogits);
    }

    Matrix dweak = Matrix::Zero(fw.probs.rows(), fw.probs.cols());
    bool weak_used = false;
    if (w.fairness != 0.0 || selector == LossSelector::kFairness || selector == LossSelector::kTotal) {
      const PenaltyValue v = simfair_penalty(fw.probs, batch.groups, batch.num_groups, out.gate.mask, cfg.fairness);
      out.parts.fairness = v.value;
      if (w.fairness != 0.0) {
        dweak += w.fairness * v.dprobs;
        weak_used = true;
      }
    }
    if (w.entropy != 0.0 || selector == LossSelector::kEntropy || selector == LossSelector::kTotal) {
      const PenaltyValue h = entropy_penalty(fw.probs);
      out.parts.entropy = h.value;
      if (w.entropy != 0.0) {
        dweak += w.entropy * h.dprobs;
        weak_used = true;
      }
    }
    if (with_grad && weak_used) out.grad += backward(params, fw.cache, through_logistic(dweak, fw.probs));
  }

  out.parts.total = w.sup * out.parts.sup + w.unsup * out.parts.unsup + w.fairness * out.parts.fairness +
                    w.entropy * out.parts.entropy;
  switch (selector) {
    case LossSelector::kSup: out.loss = out.parts.sup; break;
    case LossSelector::kUnsup: out.loss = out.parts.unsup; break;
    case LossSelector::kFairness: out.loss = out.parts.fairness; break;
    case LossSelector::kEntropy: out.loss = out.parts.entropy; break;
    case LossSelector::kTotal: out.loss = out.parts.total; break;
  }
  return out;
}

}  // namespace

const char* selector_name(LossSelector s) {
  switch (s) {
    case LossSelector::kSup: return "sup";
    case LossSelector::kUnsup: return "unsup";
    case LossSelector::kFairness: return "fairness";
    case LossSelector::kEntropy: return "entropy";
    case LossSelector::kTotal: return "total";
  }
  return "?";
}

GradResult grad_of(const MlpParams& params, const Batch& batch, LossSelector selector, const ObjectiveConfig& cfg) {
  return evaluate(params, batch, selector, cfg, true);
}

double loss_of(const MlpParams& params, const Batch& batch, LossSelector selector, const ObjectiveConfig& cfg) {
  return evaluate(params, batch, selector, cfg, false).loss;
}

AlignmentGrads alignment_grads(const MlpParams& params, const Batch& batch, const ObjectiveConfig& cfg) {
  // One gate snapshot for all three gradients.
  Batch snap = batch;
  if (!snap.gate) snap.gate = confidence_gate(forward(params, batch.x_weak).probs, cfg.tau);
  AlignmentGrads a;
  a.base = grad_of(params, snap, LossSelector::kSup, cfg).grad;
  a.base += cfg.lambda_u * grad_of(params, snap, LossSelector::kUnsup, cfg).grad;
  a.fairness = grad_of(params, snap, LossSelector::kFairness, cfg).grad;
  a.entropy = grad_of(params, snap, LossSelector::kEntropy, cfg).grad;
  a.cos_fairness = cosine(a.fairness, a.base);
  a.cos_entropy = cosine(a.entropy, a.base);
  return a;
}

}  // namespace fairssl
