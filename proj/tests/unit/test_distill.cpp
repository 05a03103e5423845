#include <doctest.h>

#include <cmath>
#include <random>

#include "discprop/distill.hpp"
#include "discprop/errors.hpp"
#include "oracles.hpp"

using namespace discprop;
using namespace discprop::distill;

TEST_CASE("propaganda CE: analytic values") {
  Matrix gold(1, 2);
  gold << 1, 0;
  Matrix q(1, 2);
  q << 1.0, 1e-12;
  CHECK(propaganda_ce(gold, q) == doctest::Approx(0.0).epsilon(1e-12));
  q << 0.5, 0.5;
  CHECK(propaganda_ce(gold, q) == doctest::Approx(std::log(2.0)));
  gold << 0, 1;
  CHECK(propaganda_ce(gold, q) == doctest::Approx(0.693147).epsilon(1e-6));
}

TEST_CASE("propaganda CE: zero probability at the gold class is clamped") {
  Matrix gold(1, 2), q(1, 2);
  gold << 0, 1;
  q << 1, 0;
  const double v = propaganda_ce(gold, q);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-std::log(1e-12)));
  CHECK(propaganda_ce_grad(gold, q).allFinite());
}

TEST_CASE("propaganda CE: 3-row case matches direct summation") {
  Matrix gold(3, 2), q(3, 2);
  gold << 1, 0, 0, 1, 0, 1;
  q << 0.9, 0.1, 0.3, 0.7, 0.55, 0.45;
  const double direct = -(std::log(0.9) + std::log(0.7) + std::log(0.45));
  CHECK(propaganda_ce(gold, q) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("propaganda CE: unlabeled rows contribute nothing") {
  Matrix gold = Matrix::Zero(2, 2), q(2, 2);
  gold(0, 1) = 1;
  q << 0.2, 0.8, 0.01, 0.99;
  CHECK(propaganda_ce(gold, q) == doctest::Approx(-std::log(0.8)));
}

TEST_CASE("response KL: worked example") {
  Matrix p(1, 4), q(1, 4);
  p << 0.7, 0.1, 0.1, 0.1;
  q << 0.25, 0.25, 0.25, 0.25;
  const double expected = 0.7 * std::log(0.7 / 0.25) + 3 * 0.1 * std::log(0.1 / 0.25);
  CHECK(response_kl(p, q) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(response_kl(p, q) == doctest::Approx(0.4458).epsilon(1e-3 / 0.4458));
}

TEST_CASE("response KL: identical distributions give zero") {
  std::mt19937_64 rng(3);
  for (int k : {4, 8}) {
    const Matrix p = oracle::random_stochastic(rng, 5, k);
    CHECK(response_kl(p, p) == doctest::Approx(0.0).epsilon(1e-15));
  }
}

TEST_CASE("response KL: zero teacher cells contribute nothing, zero student cells are clamped") {
  Matrix p(1, 4), q(1, 4);
  p << 0.5, 0.5, 0.0, 0.0;
  q << 0.5, 0.5, 0.0, 0.0;
  CHECK(response_kl(p, q) == doctest::Approx(0.0));
  q << 1.0, 0.0, 0.0, 0.0;
  const double v = response_kl(p, q);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(0.5 * std::log(0.5) + 0.5 * std::log(0.5 / 1e-12)));
}

TEST_CASE("spatial matrix: worked cases") {
  Matrix s(2, 2);
  s << 1, 0, 1, 1;
  const Matrix m = spatial_matrix(s);
  CHECK(m(0, 1) == doctest::Approx(0.7071).epsilon(1e-4));
  CHECK(m(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(m(0, 0) == 1.0);

  Matrix same(2, 3);
  same << 1, 2, 3, 1, 2, 3;
  CHECK(spatial_matrix(same)(0, 1) == doctest::Approx(1.0));

  Matrix ortho(2, 2);
  ortho << 1, 0, 0, 3;
  CHECK(spatial_matrix(ortho)(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("spatial matrix: zero-norm row") {
  Matrix s(3, 2);
  s << 1, 0, 0, 0, 1, 1;
  const Matrix m = spatial_matrix(s);
  CHECK(m(1, 1) == 1.0);
  CHECK(m(0, 1) == 0.0);
  CHECK(m(1, 2) == 0.0);
  CHECK(m.allFinite());
  const Matrix g = spatial_matrix_backward(s, Matrix::Ones(3, 3));
  CHECK(g.allFinite());
}

TEST_CASE("relation MSE: worked cases") {
  const Matrix ones = Matrix::Ones(3, 3);
  Matrix zeros_off = Matrix::Identity(3, 3);
  CHECK(relation_mse(ones, zeros_off) == doctest::Approx(1.0));
  CHECK(relation_mse(ones, ones) == 0.0);
  CHECK(relation_mse(Matrix::Ones(1, 1), Matrix::Ones(1, 1)) == 0.0);
  // The literal sum over the 6 ordered pairs.
  CHECK(relation_mse(ones, zeros_off, Reduction::Sum) == doctest::Approx(6.0));
}

TEST_CASE("relation MSE: random 4x4 pair against a double loop") {
  std::mt19937_64 rng(11);
  const Matrix a = oracle::spatial(oracle::random_matrix(rng, 4, 5));
  const Matrix b = oracle::spatial(oracle::random_matrix(rng, 4, 5));
  CHECK(relation_mse(a, b) == doctest::Approx(oracle::mse(a, b)).epsilon(1e-12));
}

TEST_CASE("relation MSE: shape mismatch is rejected") {
  CHECK_THROWS(relation_mse(Matrix::Ones(2, 2), Matrix::Ones(3, 3)));
}

TEST_CASE("total loss: arithmetic and term dropping") {
  LossReport parts;
  parts.loss_sent_propa = 1;
  parts.loss_response_global = 2;
  parts.loss_relation_global = 3;
  parts.loss_response_local = 4;
  parts.loss_relation_local = 5;
  parts.loss_token_propa = 100;
  LossWeights w;
  CHECK(total_loss(parts, w, Level::Sentence) == doctest::Approx(15.0));
  parts.loss_token_propa = 1;
  CHECK(total_loss(parts, w, Level::Token) == doctest::Approx(15.0));

  // Response-only model: relation weights zeroed.
  w.relation_global = w.relation_local = 0.0;
  CHECK(total_loss(parts, w, Level::Sentence) == doctest::Approx(1 + 2 + 4));

  // All distillation weights zero: plain CE.
  LossWeights plain;
  plain.response_global = plain.response_local = plain.relation_global = plain.relation_local = 0.0;
  CHECK(total_loss(parts, plain, Level::Sentence) == 1.0);

  // A zero weight removes even a non-finite term.
  parts.loss_relation_local = std::nan("");
  CHECK(total_loss(parts, plain, Level::Sentence) == 1.0);
}

TEST_CASE("total loss: NaN aborts naming the term") {
  LossReport parts;
  parts.loss_response_global = std::nan("");
  try {
    total_loss(parts, LossWeights{}, Level::Sentence);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("response_global") != std::string::npos);
  }
}

TEST_CASE("total loss: linear in each part") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    LossWeights w{u(rng), u(rng), u(rng), u(rng), u(rng)};
    LossReport a, b;
    for (auto* r : {&a, &b}) {
      r->loss_sent_propa = u(rng);
      r->loss_response_local = u(rng);
      r->loss_response_global = u(rng);
      r->loss_relation_local = u(rng);
      r->loss_relation_global = u(rng);
    }
    LossReport sum = a;
    sum += b;
    CHECK(total_loss(sum, w, Level::Sentence) ==
          doctest::Approx(total_loss(a, w, Level::Sentence) + total_loss(b, w, Level::Sentence)));
    CHECK(total_loss(a.scaled(2.5), w, Level::Sentence) ==
          doctest::Approx(2.5 * total_loss(a, w, Level::Sentence)));
  }
}

TEST_CASE("loss weights validation") {
  LossWeights w;
  w.response_local = -1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w.response_local = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("softmax of zero logits is uniform") {
  const Matrix p = softmax_rows(Matrix::Zero(2, 4));
  for (int i = 0; i < 2; ++i) {
    for (int c = 0; c < 4; ++c) CHECK(p(i, c) == doctest::Approx(0.25));
  }
}

TEST_CASE("loss gradients match central differences") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix p = oracle::random_stochastic(rng, 3, 4);
    // Kept away from 0: the third derivative of log q makes central
    // differences at h=1e-4 inaccurate for tiny q.
    const Matrix q = 0.5 * oracle::random_stochastic(rng, 3, 4) + Matrix::Constant(3, 4, 0.125);
    const Matrix gold = oracle::random_one_hot(rng, 3, 4);
    CHECK(oracle::max_relative_error(response_kl_grad(p, q),
                                     oracle::numeric_gradient([&](const Matrix& x) { return response_kl(p, x); }, q)) <
          1e-4);
    CHECK(oracle::max_relative_error(propaganda_ce_grad(gold, q),
                                     oracle::numeric_gradient([&](const Matrix& x) { return propaganda_ce(gold, x); }, q)) <
          1e-4);
    const Matrix s = oracle::random_matrix(rng, 3, 4);
    const Matrix mt = oracle::spatial(oracle::random_matrix(rng, 3, 4));
    const Matrix ms = spatial_matrix(s);
    for (auto red : {Reduction::Mean, Reduction::Sum}) {
      CHECK(oracle::max_relative_error(
                relation_mse_grad(mt, ms, red),
                oracle::numeric_gradient([&](const Matrix& x) { return relation_mse(mt, x, red); }, ms)) < 1e-4);
      // Through the spatial matrix back to the embeddings.
      const Matrix analytic = spatial_matrix_backward(s, relation_mse_grad(mt, ms, red));
      const Matrix numeric = oracle::numeric_gradient(
          [&](const Matrix& x) { return relation_mse(mt, spatial_matrix(x), red); }, s);
      CHECK(oracle::max_relative_error(analytic, numeric) < 1e-4);
    }
  }
}

TEST_CASE("property: KL non-negative, zero iff equal (1000 cases)") {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> rows(1, 6);
  for (int t = 0; t < 1000; ++t) {
    const int k = t % 2 == 0 ? 4 : 8;
    const int n = rows(rng);
    const Matrix p = oracle::random_stochastic(rng, n, k);
    const Matrix q = oracle::random_stochastic(rng, n, k);
    REQUIRE(response_kl(p, q) >= 0.0);
    REQUIRE(response_kl(p, q) > 1e-12);
    REQUIRE(std::abs(response_kl(p, p)) < 1e-12);
  }
}

TEST_CASE("property: spatial matrix symmetric, unit diagonal, scale invariant (1000 cases)") {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> rows(1, 6), cols(1, 8);
  std::uniform_real_distribution<double> factor(0.01, 100.0);
  for (int t = 0; t < 1000; ++t) {
    Matrix s = oracle::random_matrix(rng, rows(rng), cols(rng));
    const Matrix m = spatial_matrix(s);
    REQUIRE(m == m.transpose());
    for (int i = 0; i < m.rows(); ++i) REQUIRE(m(i, i) == 1.0);
    for (int i = 0; i < s.rows(); ++i) s.row(i) *= factor(rng);
    REQUIRE((spatial_matrix(s) - m).cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE(relation_mse(m, m) == 0.0);
  }
}
