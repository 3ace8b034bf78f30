#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fairssl/fairness.hpp"
#include "oracles.hpp"

using namespace fairssl;

namespace {

Matrix random_probs(int n, int L, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.02, 0.98);
  Matrix p(n, L);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < L; ++l) p(i, l) = u(rng);
  }
  return p;
}

}  // namespace

TEST_CASE("metrics agree with brute-force oracles on random instances") {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = oracle::random_instance(rng);
    worst = std::max(worst, std::abs(dp_gap(in.hard, in.groups, in.K) - oracle::dp(in.hard, in.groups, in.K)));
    worst = std::max(worst, std::abs(eop_gap(in.hard, in.Y, in.groups, in.K).value -
                                     oracle::eop(in.hard, in.Y, in.groups, in.K)));
    worst = std::max(worst, std::abs(macro_f1(in.hard, in.Y) - oracle::macro_f1(in.hard, in.Y)));
    worst = std::max(worst, std::abs(micro_f1(in.hard, in.Y) - oracle::micro_f1(in.hard, in.Y)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("dp gap is invariant to group relabeling and row order") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = oracle::random_instance(rng);
    const double base = dp_gap(in.hard, in.groups, in.K);
    std::vector<int> perm(in.K);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> relabeled;
    for (int g : in.groups) relabeled.push_back(perm[g]);
    CHECK(dp_gap(in.hard, relabeled, in.K) == doctest::Approx(base).epsilon(1e-12));

    std::vector<int> rows(in.hard.rows());
    std::iota(rows.begin(), rows.end(), 0);
    std::shuffle(rows.begin(), rows.end(), rng);
    CHECK(dp_gap(take_rows(in.hard, rows), take(in.groups, rows), in.K) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("dp gap hand example") {
  Matrix hard(4, 1);
  hard << 1, 1, 0, 0;
  // groups rates 1 and 0, overall 0.5 -> 0.5 + 0.5
  CHECK(dp_gap(hard, {0, 0, 1, 1}, 2) == doctest::Approx(1.0));
  CHECK(dp_gap(hard, {0, 1, 0, 1}, 2) == doctest::Approx(0.0));
  CHECK_THROWS_AS(dp_gap(hard, {0, 0, 0, 0}, 2), ConfigError);
}

TEST_CASE("eop skips strata without positives and requires some positive") {
  Matrix hard(4, 2), Y(4, 2);
  hard << 1, 0, 0, 1, 1, 1, 0, 0;
  Y << 1, 0, 1, 0, 0, 1, 0, 1;
  const auto r = eop_gap(hard, Y, {0, 0, 1, 1}, 2);
  CHECK(r.skipped_terms == 2);  // group 1 has no label-0 positives, group 0 none on label 1
  CHECK_THROWS_AS(eop_gap(hard, Matrix::Zero(4, 2), {0, 0, 1, 1}, 2), ConfigError);
  const auto eod = eod_gap(hard, Y, {0, 0, 1, 1}, 2);
  const double neg = conditional_gap(hard, Y, {0, 0, 1, 1}, 2, 0.0).value;
  CHECK(eod.value == doctest::Approx(0.5 * (r.value + neg)));
}

TEST_CASE("f1 conventions") {
  Matrix p(3, 2), y(3, 2);
  p << 1, 0, 0, 0, 1, 0;
  y << 1, 0, 1, 0, 0, 0;
  const auto f = f1_scores(p, y);
  CHECK(f.per_label[0] == doctest::Approx(2.0 / (2 + 1 + 1)));
  CHECK(f.per_label[1] == 0.0);
  CHECK(f.empty_label[1]);
  CHECK(f.macro == doctest::Approx(0.25));
  CHECK(f.micro == doctest::Approx(0.5));
}

TEST_CASE("simfair penalty value and gradient") {
  std::mt19937_64 rng(3);
  for (bool squared : {false, true}) {
    for (bool gated : {false, true}) {
      const Matrix p = random_probs(30, 3, rng);
      std::vector<int> groups(30);
      for (int i = 0; i < 30; ++i) groups[i] = i % 3;
      Matrix mask = Matrix::Ones(30, 3);
      for (int i = 0; i < 30; i += 4) mask(i, i % 3) = 0.0;
      const FairnessOptions opt{squared, gated};
      const auto v = simfair_penalty(p, groups, 3, mask, opt);

      // value from the definition
      double expected = 0.0;
      for (int k = 0; k < 3; ++k) {
        double sq = 0.0;
        for (int l = 0; l < 3; ++l) {
          double sa = 0, ca = 0, sk = 0, ck = 0;
          for (int i = 0; i < 30; ++i) {
            if (gated && mask(i, l) == 0.0) continue;
            sa += p(i, l);
            ca += 1;
            if (groups[i] == k) {
              sk += p(i, l);
              ck += 1;
            }
          }
          sq += (sa / ca - sk / ck) * (sa / ca - sk / ck);
        }
        expected += squared ? sq : std::sqrt(sq);
      }
      CHECK(v.value == doctest::Approx(expected).epsilon(1e-12));

      Matrix q = p;
      const double h = 1e-6;
      double worst = 0.0;
      for (int i = 0; i < 30; ++i) {
        for (int l = 0; l < 3; ++l) {
          const double x = q(i, l);
          q(i, l) = x + h;
          const double up = simfair_penalty(q, groups, 3, mask, opt).value;
          q(i, l) = x - h;
          const double down = simfair_penalty(q, groups, 3, mask, opt).value;
          q(i, l) = x;
          worst = std::max(worst, std::abs((up - down) / (2 * h) - v.dprobs(i, l)));
        }
      }
      CHECK(worst < 1e-7);
    }
  }
}

TEST_CASE("simfair penalty edge cases") {
  Matrix p(4, 1);
  p << 0.3, 0.3, 0.3, 0.3;
  const auto same = simfair_penalty(p, {0, 0, 1, 1}, 2, Matrix::Ones(4, 1));
  CHECK(same.value == 0.0);
  CHECK(same.dprobs.isZero());
  const auto empty = simfair_penalty(p, {0, 0, 1, 1}, 2, Matrix::Zero(4, 1));
  CHECK(empty.degenerate);
  CHECK(empty.value == 0.0);
  CHECK_THROWS_AS(simfair_penalty(p, {0, 0, 0, 0}, 1, Matrix::Ones(4, 1)), ConfigError);
}

TEST_CASE("entropy penalty value and gradient") {
  std::mt19937_64 rng(8);
  const Matrix p = random_probs(10, 2, rng);
  const auto h = entropy_penalty(p);
  double expected = 0.0;
  for (int i = 0; i < 10; ++i) {
    for (int l = 0; l < 2; ++l) expected += -p(i, l) * std::log(p(i, l)) - (1 - p(i, l)) * std::log(1 - p(i, l));
  }
  CHECK(h.value == doctest::Approx(expected / 20.0).epsilon(1e-12));
  Matrix q = p;
  for (int i = 0; i < 10; ++i) {
    const double x = q(i, 1);
    q(i, 1) = x + 1e-6;
    const double up = entropy_penalty(q).value;
    q(i, 1) = x - 1e-6;
    const double down = entropy_penalty(q).value;
    q(i, 1) = x;
    CHECK((up - down) / 2e-6 == doctest::Approx(h.dprobs(i, 1)).epsilon(1e-6));
  }
  Matrix half = Matrix::Constant(2, 2, 0.5);
  CHECK(entropy_penalty(half).value == doctest::Approx(std::log(2.0)));
}

TEST_CASE("rescaled thresholds reproduce validation prevalence") {
  Matrix s(10, 2), y(10, 2);
  for (int i = 0; i < 10; ++i) {
    s(i, 0) = 0.05 * i;
    s(i, 1) = 0.3;
    y(i, 0) = i < 3 ? 1 : 0;
    y(i, 1) = i < 5 ? 1 : 0;
  }
  const auto t = rescale_thresholds(s, y);
  CHECK(t.values[0] == doctest::Approx(0.35));
  CHECK(!t.fallback[0]);
  CHECK(binarize(s, t).col(0).sum() == 3.0);
  CHECK(t.fallback[1]);  // constant scores
  CHECK(t.values[1] == 0.5);
  y.col(0).setZero();
  CHECK(rescale_thresholds(s, y).fallback[0]);
}

TEST_CASE("saturation detection") {
  std::mt19937_64 rng(1);
  Matrix p = random_probs(40, 4, rng);
  CHECK(!saturation_detect(p).saturated);
  p.col(0).setConstant(0.2);
  CHECK(!saturation_detect(p).saturated);
  p.col(1).setConstant(0.7);
  CHECK(saturation_detect(p).saturated);
  CHECK_THROWS_AS(saturation_detect(Matrix::Zero(10, 2)), ConfigError);
}

TEST_CASE("binary decomposition on the primary dimension") {
  Matrix probs(6, 2), Y(6, 2);
  probs << 0.9, 0.1, 0.8, 0.1, 0.2, 0.1, 0.7, 0.1, 0.1, 0.1, 0.1, 0.1;
  Y << 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1;
  const std::vector<int> g{0, 0, 0, 1, 1, 1};
  const Matrix hard = binarize(probs, 0.5);
  const auto d = decompose(hard, probs, Y, g, 2, 0);
  // positive rates 2/3 vs 1/3
  CHECK(d.binary_dp == doctest::Approx(1.0 / 3.0));
  // TPR: g0 1/2, g1 1/2; FPR: g0 1/1, g1 0/1 -> max(0, 1)
  CHECK(d.binary_eod == doctest::Approx(1.0));
  CHECK(d.per_dim_dp.size() == 2);
  CHECK_THROWS_AS(decompose(hard, probs, Y, g, 2, 2), ConfigError);
}

TEST_CASE("metric report json round trip") {
  std::mt19937_64 rng(9);
  const Matrix p = random_probs(40, 3, rng);
  Matrix Y = (random_probs(40, 3, rng).array() > 0.5).cast<double>();
  std::vector<int> g(40);
  for (int i = 0; i < 40; ++i) g[i] = i % 2;
  const auto r = evaluate(p, Y, g, 2, rescale_thresholds(p, Y), 1);
  const auto back = MetricReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  CHECK(r.macro_f1 == doctest::Approx(macro_f1(binarize(p, rescale_thresholds(p, Y)), Y)));
}
