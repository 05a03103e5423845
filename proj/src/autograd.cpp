#include "discprop/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "discprop/errors.hpp"

namespace discprop::ag {

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(Parameter& param) {
  Node n;
  n.value = param.value;
  n.param = &param;
  n.requires_grad = record_;
  return push(std::move(n));
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const auto& in : inputs) {
      if (requires_grad(in)) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

bool Tape::requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

void Tape::accumulate(Var v, const Matrix& grad) {
  auto& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = grad;
  } else {
    node.grad += grad;
  }
}

void Tape::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ConfigError("backward() needs a scalar root");
  }
  if (!requires_grad(root)) return;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (int id = root.id(); id >= 0; --id) {
    auto& node = nodes_[id];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.param != nullptr) {
      if (node.param->grad.size() == 0) node.param->zero_grad();
      node.param->grad += node.grad;
    } else if (node.backward) {
      node.backward(*this, node.grad);
    }
    node.grad.resize(0, 0);
  }
}

Var matmul(Var a, Var b) {
  Matrix out = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g * b.value().transpose());
    t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  Matrix out = a.value() * b.value().transpose();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g * b.value());
    t.accumulate(b, g.transpose() * a.value());
  });
}

Var add(Var a, Var b) {
  Matrix out = a.value() + b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var add_bias(Var x, Var bias) {
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return x.tape()->record(std::move(out), {x, bias}, [x, bias](Tape& t, const Matrix& g) {
    t.accumulate(x, g);
    t.accumulate(bias, g.colwise().sum());
  });
}

Var scale(Var x, double factor) {
  Matrix out = x.value() * factor;
  return x.tape()->record(std::move(out), {x}, [x, factor](Tape& t, const Matrix& g) {
    t.accumulate(x, g * factor);
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var x) {
  Matrix out = x.value().unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  });
  return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    Matrix d = x.value().unaryExpr([](double v) {
      const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      return 0.5 * (1.0 + th) +
             0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    });
    t.accumulate(x, g.cwiseProduct(d));
  });
}

Var tanh(Var x) {
  Matrix out = x.value().array().tanh().matrix();
  return x.tape()->record(out, {x}, [x, out](Tape& t, const Matrix& g) {
    t.accumulate(x, g.cwiseProduct((1.0 - out.array().square()).matrix()));
  });
}

Var softmax_rows(Var x) {
  Matrix y = distill::softmax_rows(x.value());
  return x.tape()->record(y, {x}, [x, y](Tape& t, const Matrix& g) {
    const Vector dot = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(x, y.cwiseProduct(g.colwise() - dot));
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& xv = x.value();
  const Eigen::Index d = xv.cols();
  const Vector mean = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mean;
  const Vector inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(d)) + eps)
          .rsqrt()
          .matrix();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  return x.tape()->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, d](Tape& t, const Matrix& g) {
        t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
        t.accumulate(beta, g.colwise().sum());
        if (!t.requires_grad(x)) return;
        Matrix dxhat = g.array().rowwise() * gamma.value().row(0).array();
        const Vector mean_d = dxhat.rowwise().mean();
        const Vector mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
        Matrix dx = (dxhat.colwise() - mean_d) - xhat.cwiseProduct(mean_dx.replicate(1, d));
        t.accumulate(x, dx.array().colwise() * inv_std.array());
      });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ConfigError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return parts.front().tape()->record(std::move(out), parts, [parts](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      t.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var gather_rows(Var x, const std::vector<long>& rows) {
  const Matrix& xv = x.value();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= xv.rows()) throw ConfigError("gather_rows: index out of range");
    if (rows[r] >= 0) out.row(static_cast<Eigen::Index>(r)) = xv.row(rows[r]);
  }
  const Eigen::Index src_rows = xv.rows();
  return x.tape()->record(std::move(out), {x}, [x, rows, src_rows](Tape& t, const Matrix& g) {
    Matrix dx = Matrix::Zero(src_rows, g.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] >= 0) dx.row(rows[r]) += g.row(static_cast<Eigen::Index>(r));
    }
    t.accumulate(x, dx);
  });
}

Var concat_constant_cols(Var x, const Matrix& extra) {
  if (extra.rows() != x.rows()) throw ConfigError("concat_constant_cols: row count mismatch");
  Matrix out(x.rows(), x.cols() + extra.cols());
  out << x.value(), extra;
  const Eigen::Index xc = x.cols();
  return x.tape()->record(std::move(out), {x}, [x, xc](Tape& t, const Matrix& g) {
    t.accumulate(x, g.leftCols(xc));
  });
}

Var weighted_sum(const std::vector<std::pair<double, Var>>& terms) {
  if (terms.empty()) throw ConfigError("weighted_sum: no terms");
  double total = 0.0;
  std::vector<Var> inputs;
  for (const auto& [w, v] : terms) {
    total += w * v.value()(0, 0);
    inputs.push_back(v);
  }
  return terms.front().second.tape()->record(
      Matrix::Constant(1, 1, total), inputs, [terms](Tape& t, const Matrix& g) {
        for (const auto& [w, v] : terms) t.accumulate(v, g * w);
      });
}

namespace {

// Scores of query rows [r, r + len) against keys [lo, hi); masked pairs get -inf.
Matrix attention_scores(const Matrix& q, const Matrix& k, Eigen::Index r, Eigen::Index len,
                        Eigen::Index lo, Eigen::Index hi, double scale, const AttentionMask& mask) {
  Matrix s = q.middleRows(r, len) * k.middleRows(lo, hi - lo).transpose() * scale;
  if (mask.window <= 0 && mask.segments.empty()) return s;
  const double neg = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < len; ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const Eigen::Index qi = r + i, kj = lo + j;
      const bool far = mask.window > 0 && std::abs(qi - kj) > mask.window;
      const bool apart = !mask.segments.empty() &&
                         mask.segments[static_cast<std::size_t>(qi)] !=
                             mask.segments[static_cast<std::size_t>(kj)];
      if (far || apart) s(i, j) = neg;
    }
  }
  return s;
}

}  // namespace

Var attention(Var q, Var k, Var v, double scale, const AttentionMask& mask) {
  Tape& tape = *q.tape();
  const bool needs_grad =
      tape.requires_grad(q) || tape.requires_grad(k) || tape.requires_grad(v);
  const Eigen::Index n = k.rows();
  const Eigen::Index w = mask.window;
  if (!needs_grad) {
    // Row blocks, each against the band of keys its rows can reach.
    constexpr Eigen::Index kBlock = 256;
    const Matrix& qv = q.value();
    Matrix out(qv.rows(), v.cols());
    for (Eigen::Index r = 0; r < qv.rows(); r += kBlock) {
      const Eigen::Index len = std::min(kBlock, qv.rows() - r);
      const Eigen::Index lo = w > 0 ? std::max<Eigen::Index>(0, r - w) : 0;
      const Eigen::Index hi = w > 0 ? std::min<Eigen::Index>(n, r + len + w) : n;
      const Matrix a =
          distill::softmax_rows(attention_scores(qv, k.value(), r, len, lo, hi, scale, mask));
      out.middleRows(r, len) = a * v.value().middleRows(lo, hi - lo);
    }
    return tape.record(std::move(out), {q, k, v}, nullptr);
  }
  Matrix a = distill::softmax_rows(attention_scores(q.value(), k.value(), 0, q.rows(), 0, n, scale, mask));
  Matrix out = a * v.value();
  return tape.record(std::move(out), {q, k, v}, [q, k, v, a, scale](Tape& t, const Matrix& g) {
    t.accumulate(v, a.transpose() * g);
    const Matrix da = g * v.value().transpose();
    const Vector dot = da.cwiseProduct(a).rowwise().sum();
    const Matrix ds = a.cwiseProduct(da.colwise() - dot) * scale;
    t.accumulate(q, ds * k.value());
    t.accumulate(k, ds.transpose() * q.value());
  });
}

Var cross_entropy(const Matrix& gold, Var q, double eps) {
  const double v = distill::propaganda_ce(gold, q.value(), eps);
  return q.tape()->record(Matrix::Constant(1, 1, v), {q}, [gold, q, eps](Tape& t, const Matrix& g) {
    t.accumulate(q, g(0, 0) * distill::propaganda_ce_grad(gold, q.value(), eps));
  });
}

Var kl_divergence(const Matrix& p, Var q, double eps) {
  const double v = distill::response_kl(p, q.value(), eps);
  return q.tape()->record(Matrix::Constant(1, 1, v), {q}, [p, q, eps](Tape& t, const Matrix& g) {
    t.accumulate(q, g(0, 0) * distill::response_kl_grad(p, q.value(), eps));
  });
}

Var spatial_matrix(Var s) {
  Matrix m = distill::spatial_matrix(s.value());
  return s.tape()->record(std::move(m), {s}, [s](Tape& t, const Matrix& g) {
    t.accumulate(s, distill::spatial_matrix_backward(s.value(), g));
  });
}

Var relation_mse(const Matrix& mt, Var ms, distill::Reduction reduction) {
  const double v = distill::relation_mse(mt, ms.value(), reduction);
  return ms.tape()->record(Matrix::Constant(1, 1, v), {ms},
                           [mt, ms, reduction](Tape& t, const Matrix& g) {
                             t.accumulate(ms, g(0, 0) * distill::relation_mse_grad(
                                                            mt, ms.value(), reduction));
                           });
}

}  // namespace discprop::ag
