#include <doctest.h>

#include <cmath>
#include <random>

#include "fairssl/ssl.hpp"

using namespace fairssl;

TEST_CASE("gate keeps entries on either side of the dead band") {
  Matrix p(2, 3);
  p << 0.96, 0.5, 0.04, 0.95, 0.94, 0.051;
  const auto g = confidence_gate(p, 0.95);
  Matrix expected(2, 3);
  expected << 1, 0, 1, 1, 0, 0;
  CHECK(g.mask == expected);
  CHECK(g.pseudo(0, 0) == 1.0);
  CHECK(g.pseudo(0, 2) == 0.0);
  CHECK(g.pass_ratio == doctest::Approx(3.0 / 6.0));
  CHECK_THROWS_AS(confidence_gate(p, 0.5), ConfigError);
  CHECK_THROWS_AS(confidence_gate(p, 1.0), ConfigError);
}

TEST_CASE("unsup loss averages BCE over gated entries") {
  Matrix z(2, 2);
  z << 1.0, -2.0, 0.5, 3.0;
  Matrix pseudo(2, 2);
  pseudo << 1, 0, 0, 1;
  Matrix mask(2, 2);
  mask << 1, 0, 1, 0;
  const auto u = unsup_loss(z, pseudo, mask);
  const double l1 = -std::log(1.0 / (1.0 + std::exp(-1.0)));
  const double l2 = -std::log(1.0 - 1.0 / (1.0 + std::exp(-0.5)));
  CHECK(u.value == doctest::Approx((l1 + l2) / 2.0));
  CHECK(u.dlogits(0, 1) == 0.0);
  CHECK(u.dlogits(1, 1) == 0.0);

  const auto none = unsup_loss(z, pseudo, Matrix::Zero(2, 2));
  CHECK(none.value == 0.0);
  CHECK(none.dlogits.isZero());
}

TEST_CASE("bce with logits is stable at large magnitudes") {
  CHECK(bce_with_logits(800.0, 1.0) == doctest::Approx(0.0));
  CHECK(bce_with_logits(-800.0, 1.0) == doctest::Approx(800.0));
  CHECK(std::isfinite(bce_with_logits(-800.0, 0.0)));
}

TEST_CASE("health signals") {
  Matrix pw(2, 2), ps(2, 2);
  pw << 0.99, 0.5, 0.02, 0.97;
  ps << 0.8, 0.5, 0.6, 0.9;
  const auto g = confidence_gate(pw, 0.95);
  const auto h = health_signals(g, pw, ps);
  CHECK(h.pass_ratio == doctest::Approx(0.75));
  // gated: (0.99 -> 1, strong 1), (0.02 -> 0, strong 1), (0.97 -> 1, strong 1)
  CHECK(h.proxy_accuracy == doctest::Approx(2.0 / 3.0));
  const double s = 0.99 + 0.98 + 0.97, s2 = 0.99 * 0.99 + 0.98 * 0.98 + 0.97 * 0.97;
  CHECK(h.ess == doctest::Approx(s * s / s2));
  CHECK(!h.proxy_degenerate);

  const Matrix flat = Matrix::Constant(2, 2, 0.5);
  const auto empty = health_signals(confidence_gate(flat, 0.95), flat, flat);
  CHECK(empty.proxy_degenerate);
  CHECK(empty.ess == 1.0);
  CHECK(empty.pass_ratio == 0.0);
}

TEST_CASE("augmentations touch continuous columns only") {
  Matrix x = Matrix::Ones(50, 3);
  const std::vector<bool> cont{true, false, true};
  std::mt19937_64 rng(1);
  const Matrix w = augment_weak(x, cont, rng, 0.1);
  const Matrix s = augment_strong(x, cont, rng, 0.5, 0.3);
  CHECK(w.col(1) == x.col(1));
  CHECK(s.col(1) == x.col(1));
  CHECK(w.col(0) != x.col(0));
  int zeros = 0;
  for (int i = 0; i < 50; ++i) zeros += s(i, 0) == 0.0;
  CHECK(zeros > 0);
  std::mt19937_64 r2(1);
  CHECK(augment_weak(x, cont, r2, 0.0) == x);
  CHECK_THROWS_AS(augment_strong(x, cont, r2, 0.5, 1.0), ConfigError);
}
