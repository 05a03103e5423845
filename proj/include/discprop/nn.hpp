#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "discprop/autograd.hpp"

namespace discprop::nn {

using ag::Parameter;
using ag::Tape;
using ag::Var;

// Owns parameters with stable addresses, in registration order. Registration
// order is also the serialization and initialization order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Matrix init, bool decay = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

enum class Activation { None, Tanh, Gelu };
Activation parse_activation(const std::string& name);
std::string to_string(Activation activation);

// Row-major affine map: y = x W + b, W is in x out.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
         Rng& rng);
  Var operator()(Tape& tape, Var x) const;
  Eigen::Index in_dim() const { return weight_->value.rows(); }
  Eigen::Index out_dim() const { return weight_->value.cols(); }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

// softmax(W2 act(W1 x + b1) + b2); act defaults to the identity.
class TwoLayerHead {
 public:
  TwoLayerHead() = default;
  TwoLayerHead(ParameterStore& store, const std::string& name, Eigen::Index in,
               Eigen::Index hidden, Eigen::Index classes, Activation activation, Rng& rng);
  Var logits(Tape& tape, Var x) const;
  Var probabilities(Tape& tape, Var x) const { return ag::softmax_rows(logits(tape, x)); }
  // Inference convenience; no gradient.
  Matrix predict(const Matrix& x) const;
  Eigen::Index in_dim() const { return first_.in_dim(); }
  Eigen::Index classes() const { return second_.out_dim(); }

 private:
  Linear first_;
  Linear second_;
  Activation activation_ = Activation::None;
};

struct AdamWOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-2;
};

// Adam with decoupled weight decay applied to parameters flagged `decay`.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWOptions options);
  void step(double learning_rate);
  std::size_t steps() const { return step_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamWOptions options_;
  std::size_t step_ = 0;
};

// Linear decay from the base rate to 0 over `total_steps`.
class LinearSchedule {
 public:
  LinearSchedule(double base, std::size_t total_steps)
      : base_(base), total_(total_steps == 0 ? 1 : total_steps) {}
  double at(std::size_t step) const;

 private:
  double base_;
  std::size_t total_;
};

}  // namespace discprop::nn
