#include "discprop/distill.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

#include "discprop/errors.hpp"

namespace discprop::distill {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) +
                      "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                      "x" + std::to_string(b.cols()) + ")");
  }
}

// Cells where the clamp is inactive carry the true derivative of log Q.
double inv_clamped(double q, double eps) { return q > eps ? 1.0 / q : 0.0; }

}  // namespace

double propaganda_ce(const Matrix& gold, const Matrix& q, double eps) {
  require_same_shape(gold, q, "propaganda_ce");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      if (gold(i, c) != 0.0) loss -= gold(i, c) * std::log(std::max(q(i, c), eps));
    }
  }
  return loss;
}

Matrix propaganda_ce_grad(const Matrix& gold, const Matrix& q, double eps) {
  require_same_shape(gold, q, "propaganda_ce");
  Matrix g = Matrix::Zero(q.rows(), q.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      if (gold(i, c) != 0.0) g(i, c) = -gold(i, c) * inv_clamped(q(i, c), eps);
    }
  }
  return g;
}

double response_kl(const Matrix& p, const Matrix& q, double eps) {
  require_same_shape(p, q, "response_kl");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const double pc = p(i, c);
      if (pc > 0.0) loss += pc * (std::log(pc) - std::log(std::max(q(i, c), eps)));
    }
  }
  return loss;
}

Matrix response_kl_grad(const Matrix& p, const Matrix& q, double eps) {
  require_same_shape(p, q, "response_kl");
  Matrix g = Matrix::Zero(q.rows(), q.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      if (p(i, c) > 0.0) g(i, c) = -p(i, c) * inv_clamped(q(i, c), eps);
    }
  }
  return g;
}

Matrix spatial_matrix(const Matrix& s) {
  const Eigen::Index n = s.rows();
  Vector norms = s.rowwise().norm();
  Matrix unit = Matrix::Zero(n, s.cols());
  bool warned = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (norms(i) > 0.0) {
      unit.row(i) = s.row(i) / norms(i);
    } else if (!warned) {
      spdlog::warn("spatial_matrix: zero-norm sentence embedding at row {}", i);
      warned = true;
    }
  }
  Matrix m = unit * unit.transpose();
  // GEMM rounding can differ between (i,k) and (k,i).
  m = (0.5 * (m + m.transpose())).eval();
  m.diagonal().setOnes();
  return m;
}

Matrix spatial_matrix_backward(const Matrix& s, const Matrix& grad_m) {
  const Eigen::Index n = s.rows();
  if (grad_m.rows() != n || grad_m.cols() != n) {
    throw ConfigError("spatial_matrix_backward: gradient must be n x n");
  }
  Vector norms = s.rowwise().norm();
  Matrix unit = Matrix::Zero(n, s.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (norms(i) > 0.0) unit.row(i) = s.row(i) / norms(i);
  }
  Matrix m = unit * unit.transpose();
  // Symmetrised upstream gradient, diagonal removed.
  Matrix g = grad_m + grad_m.transpose();
  g.diagonal().setZero();
  Matrix ds = Matrix::Zero(n, s.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (norms(i) == 0.0) continue;
    RowVector acc = RowVector::Zero(s.cols());
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == i || g(i, k) == 0.0) continue;
      acc += g(i, k) * (unit.row(k) - m(i, k) * unit.row(i));
    }
    ds.row(i) = acc / norms(i);
  }
  return ds;
}

Reduction parse_reduction(const std::string& name) {
  if (name == "mean") return Reduction::Mean;
  if (name == "sum") return Reduction::Sum;
  throw ConfigError("relation_loss_reduction must be 'mean' or 'sum', got '" + name + "'");
}

std::string to_string(Reduction reduction) {
  return reduction == Reduction::Mean ? "mean" : "sum";
}

double relation_mse(const Matrix& mt, const Matrix& ms, Reduction reduction) {
  require_same_shape(mt, ms, "relation_mse");
  const Eigen::Index n = mt.rows();
  if (n < 2) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) {
      if (i == k) continue;
      const double d = mt(i, k) - ms(i, k);
      acc += d * d;
    }
  }
  return reduction == Reduction::Mean ? acc / static_cast<double>(n * (n - 1)) : acc;
}

Matrix relation_mse_grad(const Matrix& mt, const Matrix& ms, Reduction reduction) {
  require_same_shape(mt, ms, "relation_mse");
  const Eigen::Index n = mt.rows();
  Matrix g = Matrix::Zero(n, n);
  if (n < 2) return g;
  const double scale =
      reduction == Reduction::Mean ? 2.0 / static_cast<double>(n * (n - 1)) : 2.0;
  g = scale * (ms - mt);
  g.diagonal().setZero();
  return g;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    RowVector e = (logits.row(i).array() - mx).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

void LossWeights::validate() const {
  const std::pair<const char*, double> all[] = {
      {"propaganda", propaganda},           {"response_local", response_local},
      {"response_global", response_global}, {"relation_local", relation_local},
      {"relation_global", relation_global}};
  for (const auto& [name, w] : all) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ConfigError(std::string("loss weight '") + name + "' must be finite and >= 0");
    }
  }
}

Level parse_level(const std::string& name) {
  if (name == "sentence") return Level::Sentence;
  if (name == "token") return Level::Token;
  throw ConfigError("level must be 'sentence' or 'token', got '" + name + "'");
}

std::string to_string(Level level) { return level == Level::Sentence ? "sentence" : "token"; }

LossReport& LossReport::operator+=(const LossReport& o) {
  loss_sent_propa += o.loss_sent_propa;
  loss_token_propa += o.loss_token_propa;
  loss_response_local += o.loss_response_local;
  loss_response_global += o.loss_response_global;
  loss_relation_local += o.loss_relation_local;
  loss_relation_global += o.loss_relation_global;
  total += o.total;
  return *this;
}

LossReport LossReport::scaled(double f) const {
  LossReport r = *this;
  r.loss_sent_propa *= f;
  r.loss_token_propa *= f;
  r.loss_response_local *= f;
  r.loss_response_global *= f;
  r.loss_relation_local *= f;
  r.loss_relation_global *= f;
  r.total *= f;
  return r;
}

double total_loss(const LossReport& parts, const LossWeights& weights, Level level) {
  const double propa =
      level == Level::Sentence ? parts.loss_sent_propa : parts.loss_token_propa;
  const std::pair<const char*, std::pair<double, double>> terms[] = {
      {level == Level::Sentence ? "loss_sent_propa" : "loss_token_propa",
       {weights.propaganda, propa}},
      {"loss_response_global", {weights.response_global, parts.loss_response_global}},
      {"loss_relation_global", {weights.relation_global, parts.loss_relation_global}},
      {"loss_response_local", {weights.response_local, parts.loss_response_local}},
      {"loss_relation_local", {weights.relation_local, parts.loss_relation_local}},
  };
  double total = 0.0;
  for (const auto& [name, wv] : terms) {
    const auto [w, v] = wv;
    if (w == 0.0) continue;
    if (!std::isfinite(v)) {
      throw NumericalError(std::string("non-finite loss term ") + name);
    }
    total += w * v;
  }
  return total;
}

}  // namespace discprop::distill
