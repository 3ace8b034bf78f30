#include <doctest.h>

#include <random>

#include "fairssl/objective.hpp"
#include "oracles.hpp"

using namespace fairssl;

namespace {

ObjectiveConfig weighted_config(bool gated) {
  ObjectiveConfig c;
  c.tau = 0.7;
  c.lambda_u = 0.8;
  c.lambda_v = 1.7;
  c.lambda_h = 0.4;
  c.fairness.gated = gated;
  return c;
}

}  // namespace

TEST_CASE("every loss term matches central differences on a small softplus network") {
  std::mt19937_64 rng(77);
  const std::vector<int> dims{5, 8, 3};
  for (int trial = 0; trial < 6; ++trial) {
    const auto params = init(dims, 100 + trial, Activation::kSoftplus);
    REQUIRE(params.count() <= 200);
    const ObjectiveConfig cfg = weighted_config(trial % 2 == 0);
    const Batch b = oracle::random_batch(params, rng, 6, 16, 2, cfg.tau);
    REQUIRE(b.gate->gated() > 0);
    for (auto sel : {LossSelector::kSup, LossSelector::kUnsup, LossSelector::kFairness, LossSelector::kEntropy,
                     LossSelector::kTotal}) {
      const Vector g = grad_of(params, b, sel, cfg).grad.values;
      const Vector fd = oracle::fd_grad(params, b, sel, cfg, 1e-5);
      CHECK_MESSAGE(oracle::relative_error(g, fd) < 1e-5, selector_name(sel));
    }
  }
}

TEST_CASE("total is the weighted sum of its parts and the gradients add up") {
  std::mt19937_64 rng(3);
  const auto params = init({4, 6, 2}, 5, Activation::kSoftplus);
  const ObjectiveConfig cfg = weighted_config(true);
  const Batch b = oracle::random_batch(params, rng, 5, 12, 2, cfg.tau);
  const auto total = grad_of(params, b, LossSelector::kTotal, cfg);
  const auto sup = grad_of(params, b, LossSelector::kSup, cfg);
  const auto uns = grad_of(params, b, LossSelector::kUnsup, cfg);
  const auto fair = grad_of(params, b, LossSelector::kFairness, cfg);
  const auto ent = grad_of(params, b, LossSelector::kEntropy, cfg);
  CHECK(total.loss == doctest::Approx(sup.loss + 0.8 * uns.loss + 1.7 * fair.loss + 0.4 * ent.loss));
  const Vector sum = sup.grad.values + 0.8 * uns.grad.values + 1.7 * fair.grad.values + 0.4 * ent.grad.values;
  CHECK((total.grad.values - sum).norm() < 1e-12 * std::max(1.0, sum.norm()));
  CHECK(total.parts.fairness == doctest::Approx(fair.loss));
  CHECK(loss_of(params, b, LossSelector::kTotal, cfg) == doctest::Approx(total.loss));
}

TEST_CASE("penalty parts are reported even with zero weights") {
  std::mt19937_64 rng(4);
  const auto params = init({4, 6, 2}, 6, Activation::kRelu);
  ObjectiveConfig cfg;
  cfg.tau = 0.7;
  const Batch b = oracle::random_batch(params, rng, 5, 12, 2, cfg.tau);
  const auto total = grad_of(params, b, LossSelector::kTotal, cfg);
  CHECK(total.parts.entropy > 0.0);
  const auto without = grad_of(params, b, LossSelector::kSup, cfg).grad.values +
                       grad_of(params, b, LossSelector::kUnsup, cfg).grad.values;
  CHECK((total.grad.values - without).norm() < 1e-12);
}

TEST_CASE("selectors validate their inputs") {
  const auto params = init({3, 4, 2}, 1);
  ObjectiveConfig cfg;
  Batch b;
  b.x_weak = Matrix::Zero(4, 3);
  b.x_strong = Matrix::Zero(4, 3);
  b.groups = {0, 1, 0, 1};
  b.num_groups = 2;
  CHECK_THROWS_AS(grad_of(params, b, LossSelector::kSup, cfg), ConfigError);
  CHECK_NOTHROW(grad_of(params, b, LossSelector::kFairness, cfg));
  b.groups = {0, 1};
  CHECK_THROWS_AS(grad_of(params, b, LossSelector::kFairness, cfg), ConfigError);
  CHECK_NOTHROW(grad_of(params, b, LossSelector::kEntropy, cfg));
}

TEST_CASE("unlabeled labels never enter a loss") {
  // The batch carries no unlabeled targets at all, and the gate comes only from weak-view predictions,
  // so changing the labeled targets is the only way to move the supervised term.
  std::mt19937_64 rng(12);
  const auto params = init({4, 6, 2}, 9);
  ObjectiveConfig cfg;
  cfg.tau = 0.7;
  Batch b = oracle::random_batch(params, rng, 5, 12, 2, cfg.tau);
  const double before = loss_of(params, b, LossSelector::kUnsup, cfg);
  b.y_labeled.setOnes();
  CHECK(loss_of(params, b, LossSelector::kUnsup, cfg) == before);
}

TEST_CASE("alignment cosines agree with the component gradients") {
  std::mt19937_64 rng(21);
  const auto params = init({4, 6, 2}, 2, Activation::kSoftplus);
  ObjectiveConfig cfg = weighted_config(false);
  Batch b = oracle::random_batch(params, rng, 5, 12, 2, cfg.tau);
  const auto a = alignment_grads(params, b, cfg);
  const Vector base = grad_of(params, b, LossSelector::kSup, cfg).grad.values +
                      cfg.lambda_u * grad_of(params, b, LossSelector::kUnsup, cfg).grad.values;
  CHECK((a.base.values - base).norm() < 1e-12);
  CHECK(a.cos_fairness == doctest::Approx(cosine(a.fairness, a.base)));
  CHECK(a.cos_entropy >= -1.0);
  CHECK(a.cos_entropy <= 1.0);
}
