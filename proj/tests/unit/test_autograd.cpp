#include <doctest.h>

#include <functional>
#include <random>

#include "discprop/autograd.hpp"
#include "discprop/nn.hpp"
#include "oracles.hpp"

using namespace discprop;
using ag::Parameter;
using ag::Tape;
using ag::Var;

namespace {

using Build = std::function<Var(Tape&, const std::vector<Var>&)>;

// Projects the output to a scalar with fixed random vectors, then compares the
// tape gradient of every input with central differences.
double check_op(std::vector<Matrix> inputs, const Build& build, std::uint64_t seed = 1) {
  std::vector<Parameter> params(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    params[i].name = "x" + std::to_string(i);
    params[i].value = inputs[i];
  }
  Matrix u, v;
  auto evaluate = [&](bool grad) {
    Tape tape;
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(tape.parameter(p));
    Var out = build(tape, vars);
    if (u.size() == 0) {
      std::mt19937_64 rng(seed);
      u = oracle::random_matrix(rng, 1, static_cast<int>(out.rows()));
      v = oracle::random_matrix(rng, static_cast<int>(out.cols()), 1);
    }
    Var scalar = ag::matmul(ag::matmul(tape.constant(u), out), tape.constant(v));
    if (grad) tape.backward(scalar);
    return scalar.value()(0, 0);
  };
  for (auto& p : params) p.zero_grad();
  evaluate(true);
  double worst = 0.0;
  for (auto& p : params) {
    const Matrix analytic = p.grad;
    const Matrix numeric = oracle::numeric_gradient(
        [&](const Matrix& x) {
          const Matrix keep = p.value;
          p.value = x;
          const double f = evaluate(false);
          p.value = keep;
          return f;
        },
        p.value);
    worst = std::max(worst, oracle::max_relative_error(analytic, numeric, 1e-6));
  }
  return worst;
}

Matrix rnd(std::mt19937_64& rng, int r, int c) { return oracle::random_matrix(rng, r, c); }

}  // namespace

TEST_CASE("autograd: elementwise and linear ops") {
  std::mt19937_64 rng(1);
  CHECK(check_op({rnd(rng, 3, 4), rnd(rng, 4, 2)},
                 [](Tape&, const std::vector<Var>& x) { return ag::matmul(x[0], x[1]); }) < 1e-6);
  CHECK(check_op({rnd(rng, 3, 4), rnd(rng, 5, 4)},
                 [](Tape&, const std::vector<Var>& x) { return ag::matmul_nt(x[0], x[1]); }) < 1e-6);
  CHECK(check_op({rnd(rng, 3, 4), rnd(rng, 3, 4)},
                 [](Tape&, const std::vector<Var>& x) { return ag::add(x[0], x[1]); }) < 1e-6);
  CHECK(check_op({rnd(rng, 3, 4), rnd(rng, 1, 4)},
                 [](Tape&, const std::vector<Var>& x) { return ag::add_bias(x[0], x[1]); }) < 1e-6);
  CHECK(check_op({rnd(rng, 3, 4)},
                 [](Tape&, const std::vector<Var>& x) { return ag::scale(x[0], -2.5); }) < 1e-6);
  CHECK(check_op({rnd(rng, 3, 4)},
                 [](Tape&, const std::vector<Var>& x) { return ag::gelu(x[0]); }) < 1e-6);
  CHECK(check_op({rnd(rng, 3, 4)},
                 [](Tape&, const std::vector<Var>& x) { return ag::tanh(x[0]); }) < 1e-6);
  CHECK(check_op({rnd(rng, 3, 4)},
                 [](Tape&, const std::vector<Var>& x) { return ag::softmax_rows(x[0]); }) < 1e-6);
  CHECK(check_op({rnd(rng, 3, 5), rnd(rng, 1, 5), rnd(rng, 1, 5)},
                 [](Tape&, const std::vector<Var>& x) { return ag::layer_norm(x[0], x[1], x[2]); }) <
        1e-5);
}

TEST_CASE("autograd: structural ops") {
  std::mt19937_64 rng(2);
  CHECK(check_op({rnd(rng, 3, 2), rnd(rng, 3, 4)},
                 [](Tape&, const std::vector<Var>& x) { return ag::concat_cols({x[0], x[1]}); }) <
        1e-6);
  CHECK(check_op({rnd(rng, 4, 3)},
                 [](Tape&, const std::vector<Var>& x) {
                   return ag::gather_rows(x[0], {2, -1, 0, 2, 3});
                 }) < 1e-6);
  const Matrix extra = rnd(rng, 3, 2);
  CHECK(check_op({rnd(rng, 3, 4)},
                 [&](Tape&, const std::vector<Var>& x) {
                   return ag::concat_constant_cols(x[0], extra);
                 }) < 1e-6);
  CHECK(check_op({rnd(rng, 1, 1), rnd(rng, 1, 1)},
                 [](Tape&, const std::vector<Var>& x) {
                   return ag::weighted_sum({{0.5, x[0]}, {2.0, x[1]}, {0.0, x[0]}});
                 }) < 1e-6);
}

TEST_CASE("gather_rows: negative index gives a zero row") {
  Tape tape;
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  const Var g = ag::gather_rows(tape.constant(m), {-1, 1});
  CHECK(g.value().row(0).isZero());
  CHECK(g.value()(1, 1) == 4);
}

TEST_CASE("autograd: attention with and without masks") {
  std::mt19937_64 rng(3);
  auto att = [](ag::AttentionMask mask) {
    return [mask](Tape&, const std::vector<Var>& x) {
      return ag::attention(x[0], x[1], x[2], 0.5, mask);
    };
  };
  const auto q = rnd(rng, 6, 4), k = rnd(rng, 6, 4), v = rnd(rng, 6, 3);
  CHECK(check_op({q, k, v}, att({})) < 1e-5);
  CHECK(check_op({q, k, v}, att({1, {}})) < 1e-5);
  CHECK(check_op({q, k, v}, att({0, {0, 0, 1, 1, 1, 2}})) < 1e-5);
  CHECK(check_op({q, k, v}, att({2, {0, 0, 0, 1, 1, 1}})) < 1e-5);
}

TEST_CASE("attention: masked keys receive no weight, no-grad path agrees") {
  std::mt19937_64 rng(4);
  const Matrix q = rnd(rng, 7, 3), k = rnd(rng, 7, 3), v = rnd(rng, 7, 2);
  const ag::AttentionMask mask{1, {0, 0, 0, 1, 1, 2, 2}};
  Tape rec(true), plain(false);
  Parameter pq{"q", q, {}}, pk{"k", k, {}}, pv{"v", v, {}};
  const Matrix a = ag::attention(rec.parameter(pq), rec.parameter(pk), rec.parameter(pv), 0.7, mask).value();
  const Matrix b =
      ag::attention(plain.constant(q), plain.constant(k), plain.constant(v), 0.7, mask).value();
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);

  // Row 3 may only see itself and row 4 (segment 1, window 1).
  Matrix s(1, 2);
  s << std::exp(0.7 * q.row(3).dot(k.row(3))), std::exp(0.7 * q.row(3).dot(k.row(4)));
  s /= s.sum();
  const RowVector expected = s(0, 0) * v.row(3) + s(0, 1) * v.row(4);
  CHECK((a.row(3) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("autograd: loss nodes") {
  std::mt19937_64 rng(5);
  const Matrix gold = oracle::random_one_hot(rng, 3, 2);
  CHECK(check_op({rnd(rng, 3, 2)},
                 [&](Tape&, const std::vector<Var>& x) {
                   return ag::cross_entropy(gold, ag::softmax_rows(x[0]), 1e-12);
                 }) < 1e-5);
  const Matrix p = oracle::random_stochastic(rng, 3, 4);
  CHECK(check_op({rnd(rng, 3, 4)},
                 [&](Tape&, const std::vector<Var>& x) {
                   return ag::kl_divergence(p, ag::softmax_rows(x[0]), 1e-12);
                 }) < 1e-5);
  CHECK(check_op({rnd(rng, 4, 3)},
                 [](Tape&, const std::vector<Var>& x) { return ag::spatial_matrix(x[0]); }) < 1e-5);
  const Matrix mt = oracle::spatial(rnd(rng, 3, 4));
  for (auto red : {distill::Reduction::Mean, distill::Reduction::Sum}) {
    CHECK(check_op({rnd(rng, 3, 4)},
                   [&](Tape&, const std::vector<Var>& x) {
                     return ag::relation_mse(mt, ag::spatial_matrix(x[0]), red);
                   }) < 1e-5);
  }
}

TEST_CASE("tape without recording still computes values") {
  Tape tape(false);
  Parameter p{"p", Matrix::Ones(1, 1), {}};
  const Var v = ag::scale(tape.parameter(p), 3.0);
  CHECK(v.value()(0, 0) == 3.0);
  CHECK_FALSE(tape.requires_grad(v));
}

TEST_CASE("AdamW and linear schedule") {
  nn::LinearSchedule sched(1.0, 4);
  CHECK(sched.at(0) == doctest::Approx(1.0));
  CHECK(sched.at(2) == doctest::Approx(0.5));
  CHECK(sched.at(4) == doctest::Approx(0.0));

  // Decoupled decay: zero gradient still shrinks decayed weights only.
  Parameter a{"a", Matrix::Constant(1, 1, 2.0), Matrix::Zero(1, 1), true};
  Parameter b{"b", Matrix::Constant(1, 1, 2.0), Matrix::Zero(1, 1), false};
  nn::AdamW opt({&a, &b}, {0.1, 0.9, 0.999, 1e-8, 0.5});
  opt.step(0.1);
  CHECK(a.value(0, 0) == doctest::Approx(2.0 * (1 - 0.1 * 0.5)));
  CHECK(b.value(0, 0) == 2.0);

  // Minimizes a quadratic.
  Parameter x{"x", Matrix::Constant(1, 1, 5.0), {}, false};
  nn::AdamW opt2({&x}, {0.1, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 500; ++i) {
    x.grad = 2 * x.value;
    opt2.step(0.1);
  }
  CHECK(std::abs(x.value(0, 0)) < 1e-2);
}

TEST_CASE("two-layer head outputs are row-stochastic") {
  nn::ParameterStore store;
  nn::Rng rng(3);
  for (auto act : {nn::Activation::None, nn::Activation::Tanh, nn::Activation::Gelu}) {
    nn::TwoLayerHead head(store, "h" + nn::to_string(act), 6, 5, 8, act, rng);
    std::mt19937_64 g(1);
    const Matrix p = head.predict(oracle::random_matrix(g, 4, 6));
    CHECK(p.rows() == 4);
    CHECK(p.cols() == 8);
    CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(p.minCoeff() >= 0.0);
  }
}
