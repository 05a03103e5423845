#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "discprop/distill.hpp"
#include "discprop/tensor.hpp"

// Minimal reverse-mode differentiation over dense matrices. A Tape records
// every intermediate value of one forward pass; backward() walks it in reverse
// and accumulates gradients into the Parameters that were read.
namespace discprop::ag {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = true;  // subject to decoupled weight decay

  void zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  // With recording off, values are computed but nothing is differentiable.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Parameter& param);
  // `inputs` decide whether the result needs a gradient; `backward` receives
  // d(root)/d(result) and must accumulate into the inputs.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward);

  void backward(Var root);
  void accumulate(Var v, const Matrix& grad);
  bool requires_grad(Var v) const;
  const Matrix& value_of(int id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  Var push(Node node);

  std::deque<Node> nodes_;
  bool record_;
};

inline const Matrix& Var::value() const { return tape_->value_of(id_); }

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
// Adds the 1 x c row `bias` to every row of `x`.
Var add_bias(Var x, Var bias);
Var scale(Var x, double factor);
Var gelu(Var x);
Var tanh(Var x);
Var softmax_rows(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var concat_cols(const std::vector<Var>& parts);
// Row r of the result is row rows[r] of x, or zeros when rows[r] < 0.
Var gather_rows(Var x, const std::vector<long>& rows);
// [x | extra] where extra is a constant with the same row count.
Var concat_constant_cols(Var x, const Matrix& extra);
// sum_k weights[k] * terms[k], all 1 x 1.
Var weighted_sum(const std::vector<std::pair<double, Var>>& terms);

// Which query/key pairs may attend: |i - j| <= window (0 = unlimited) and,
// when segments is non-empty, equal segment ids.
struct AttentionMask {
  long window = 0;
  std::vector<long> segments;
};
// softmax(q k^T * scale) v under `mask`. Without gradients the score matrix is
// built in row blocks and never held whole, so long inputs stay cheap at
// inference.
Var attention(Var q, Var k, Var v, double scale, const AttentionMask& mask = {});

// Loss nodes delegate to discprop::distill for values and gradients.
Var cross_entropy(const Matrix& gold, Var q, double eps);
Var kl_divergence(const Matrix& p_teacher, Var q, double eps);
Var spatial_matrix(Var s);
Var relation_mse(const Matrix& m_teacher, Var m_student, distill::Reduction reduction);

}  // namespace discprop::ag
