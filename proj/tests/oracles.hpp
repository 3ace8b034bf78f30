#pragma once

// Brute-force reference implementations used by the unit and acceptance tests.
// They are written from the metric definitions, not from the library code.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fairssl/data.hpp"
#include "fairssl/nnet.hpp"
#include "fairssl/objective.hpp"
#include "fairssl/ssl.hpp"

namespace oracle {

using fairssl::Matrix;

struct Instance {
  Matrix hard;
  Matrix Y;
  std::vector<int> groups;
  int K = 2;
};

// n <= 50, L <= 4, K <= 3, every group nonempty and every label with at least one positive.
inline Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nd(6, 50), ld(1, 4), kd(2, 3), bit(0, 1);
  Instance in;
  const int n = nd(rng), L = ld(rng);
  in.K = kd(rng);
  in.hard.resize(n, L);
  in.Y.resize(n, L);
  std::uniform_int_distribution<int> gd(0, in.K - 1);
  for (int i = 0; i < n; ++i) {
    in.groups.push_back(i < in.K ? i : gd(rng));
    for (int l = 0; l < L; ++l) {
      in.hard(i, l) = bit(rng);
      in.Y(i, l) = bit(rng);
    }
  }
  for (int l = 0; l < L; ++l) in.Y(0, l) = 1.0;
  return in;
}

// Rate of positive predictions among rows i with keep(i, l).
template <class Keep>
double rate(const Matrix& hard, int l, Keep keep, bool& any) {
  int num = 0, den = 0;
  for (int i = 0; i < hard.rows(); ++i) {
    if (!keep(i, l)) continue;
    ++den;
    num += hard(i, l) == 1.0 ? 1 : 0;
  }
  any = den > 0;
  return any ? static_cast<double>(num) / den : 0.0;
}

inline double dp(const Matrix& hard, const std::vector<int>& groups, int K) {
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    double sq = 0.0;
    for (int l = 0; l < hard.cols(); ++l) {
      bool a = false, b = false;
      const double all = rate(hard, l, [](int, int) { return true; }, a);
      const double grp = rate(hard, l, [&](int i, int) { return groups[i] == k; }, b);
      sq += (all - grp) * (all - grp);
    }
    total += std::sqrt(sq);
  }
  return total;
}

// Same aggregation restricted to Y == outcome; (group, label) pairs without such rows are skipped.
inline double conditional(const Matrix& hard, const Matrix& Y, const std::vector<int>& groups, int K,
                          double outcome) {
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    double sq = 0.0;
    for (int l = 0; l < hard.cols(); ++l) {
      bool a = false, b = false;
      const double all = rate(hard, l, [&](int i, int c) { return Y(i, c) == outcome; }, a);
      const double grp = rate(hard, l, [&](int i, int c) { return Y(i, c) == outcome && groups[i] == k; }, b);
      if (!a || !b) continue;
      sq += (all - grp) * (all - grp);
    }
    total += std::sqrt(sq);
  }
  return total;
}

inline double eop(const Matrix& hard, const Matrix& Y, const std::vector<int>& groups, int K) {
  return conditional(hard, Y, groups, K, 1.0);
}

// F1 through precision and recall; zero when either is undefined or zero.
inline double f1_pr(double tp, double fp, double fn) {
  if (tp == 0.0) return 0.0;
  const double p = tp / (tp + fp), r = tp / (tp + fn);
  return 2.0 * p * r / (p + r);
}

inline double macro_f1(const Matrix& hard, const Matrix& Y) {
  double s = 0.0;
  for (int l = 0; l < hard.cols(); ++l) {
    double tp = 0, fp = 0, fn = 0;
    for (int i = 0; i < hard.rows(); ++i) {
      if (hard(i, l) == 1.0 && Y(i, l) == 1.0) tp += 1;
      if (hard(i, l) == 1.0 && Y(i, l) == 0.0) fp += 1;
      if (hard(i, l) == 0.0 && Y(i, l) == 1.0) fn += 1;
    }
    s += f1_pr(tp, fp, fn);
  }
  return s / hard.cols();
}

inline double micro_f1(const Matrix& hard, const Matrix& Y) {
  double tp = 0, fp = 0, fn = 0;
  for (int i = 0; i < hard.rows(); ++i) {
    for (int l = 0; l < hard.cols(); ++l) {
      if (hard(i, l) == 1.0 && Y(i, l) == 1.0) tp += 1;
      if (hard(i, l) == 1.0 && Y(i, l) == 0.0) fp += 1;
      if (hard(i, l) == 0.0 && Y(i, l) == 1.0) fn += 1;
    }
  }
  return f1_pr(tp, fp, fn);
}

// Central finite difference of loss_of along every parameter; the gate snapshot must be fixed in the batch.
inline fairssl::Vector fd_grad(const fairssl::MlpParams& params, const fairssl::Batch& batch,
                               fairssl::LossSelector sel, const fairssl::ObjectiveConfig& cfg, double h) {
  fairssl::MlpParams p = params;
  fairssl::Vector g(p.count());
  for (Eigen::Index j = 0; j < p.count(); ++j) {
    const double x = p.flat()(j);
    p.flat()(j) = x + h;
    const double up = fairssl::loss_of(p, batch, sel, cfg);
    p.flat()(j) = x - h;
    const double down = fairssl::loss_of(p, batch, sel, cfg);
    p.flat()(j) = x;
    g(j) = (up - down) / (2.0 * h);
  }
  return g;
}

// Small labeled/unlabeled batch with a fixed gate snapshot taken at `params`.
inline fairssl::Batch random_batch(const fairssl::MlpParams& params, std::mt19937_64& rng, int n_lab, int n_unl,
                                   int K, double tau) {
  std::normal_distribution<double> nd(0.0, 1.5);
  std::uniform_int_distribution<int> bit(0, 1), gd(0, K - 1);
  const int d = params.input_dim(), L = params.output_dim();
  fairssl::Batch b;
  b.x_labeled.resize(n_lab, d);
  b.y_labeled.resize(n_lab, L);
  b.x_weak.resize(n_unl, d);
  b.x_strong.resize(n_unl, d);
  for (int i = 0; i < n_lab; ++i) {
    for (int j = 0; j < d; ++j) b.x_labeled(i, j) = nd(rng);
    for (int l = 0; l < L; ++l) b.y_labeled(i, l) = bit(rng);
  }
  for (int i = 0; i < n_unl; ++i) {
    for (int j = 0; j < d; ++j) {
      b.x_weak(i, j) = nd(rng);
      b.x_strong(i, j) = b.x_weak(i, j) + 0.3 * nd(rng);
    }
    b.groups.push_back(i < K ? i : gd(rng));
  }
  b.num_groups = K;
  b.gate = fairssl::confidence_gate(fairssl::forward(params, b.x_weak).probs, tau);
  return b;
}

// ||analytic - fd|| / max(||fd||, 1e-12)
inline double relative_error(const fairssl::Vector& analytic, const fairssl::Vector& fd) {
  return (analytic - fd).norm() / std::max(fd.norm(), 1e-12);
}

}  // namespace oracle
