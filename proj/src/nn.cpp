#include "discprop/nn.hpp"

#include <cmath>

#include "discprop/errors.hpp"

namespace discprop::nn {

Parameter& ParameterStore::add(std::string name, Matrix init, bool decay) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = std::move(init);
  p->decay = decay;
  p->zero_grad();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw ConfigError("unknown parameter '" + name + "'");
}

const Parameter& ParameterStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw ConfigError("unknown parameter '" + name + "'");
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return true;
  }
  return false;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

Matrix Rng::normal(Eigen::Index rows, Eigen::Index cols, double stddev) {
  // Box-Muller on the raw engine output, so draws do not depend on the
  // standard library's distribution implementation.
  Matrix m(rows, cols);
  constexpr double kTwoPi = 6.283185307179586;
  const auto uniform = [this] {
    return (static_cast<double>(engine_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  };
  for (Eigen::Index i = 0; i < m.size(); i += 2) {
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = kTwoPi * uniform();
    m.data()[i] = stddev * r * std::cos(theta);
    if (i + 1 < m.size()) m.data()[i + 1] = stddev * r * std::sin(theta);
  }
  return m;
}

Activation parse_activation(const std::string& name) {
  if (name == "none") return Activation::None;
  if (name == "tanh") return Activation::Tanh;
  if (name == "gelu") return Activation::Gelu;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation activation) {
  switch (activation) {
    case Activation::Tanh: return "tanh";
    case Activation::Gelu: return "gelu";
    case Activation::None: break;
  }
  return "none";
}

Linear::Linear(ParameterStore& store, const std::string& name, Eigen::Index in,
               Eigen::Index out, Rng& rng) {
  if (in <= 0 || out <= 0) throw ConfigError("Linear '" + name + "' needs positive dims");
  weight_ = &store.add(name + ".weight",
                       rng.normal(in, out, 1.0 / std::sqrt(static_cast<double>(in))));
  bias_ = &store.add(name + ".bias", Matrix::Zero(1, out), false);
}

Var Linear::operator()(Tape& tape, Var x) const {
  if (x.cols() != weight_->value.rows()) {
    throw ConfigError("Linear input width " + std::to_string(x.cols()) + " does not match " +
                      std::to_string(weight_->value.rows()));
  }
  return ag::add_bias(ag::matmul(x, tape.parameter(*weight_)), tape.parameter(*bias_));
}

TwoLayerHead::TwoLayerHead(ParameterStore& store, const std::string& name, Eigen::Index in,
                           Eigen::Index hidden, Eigen::Index classes, Activation activation,
                           Rng& rng)
    : first_(store, name + ".fc1", in, hidden, rng),
      second_(store, name + ".fc2", hidden, classes, rng),
      activation_(activation) {}

Var TwoLayerHead::logits(Tape& tape, Var x) const {
  Var h = first_(tape, x);
  switch (activation_) {
    case Activation::Tanh: h = ag::tanh(h); break;
    case Activation::Gelu: h = ag::gelu(h); break;
    case Activation::None: break;
  }
  return second_(tape, h);
}

Matrix TwoLayerHead::predict(const Matrix& x) const {
  Tape tape(false);
  return probabilities(tape, tape.constant(x)).value();
}

AdamW::AdamW(std::vector<Parameter*> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::step(double lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (p.grad.size() == 0) continue;
    if (p.decay && options_.weight_decay > 0.0) {
      p.value *= 1.0 - lr * options_.weight_decay;
    }
    m_[k] = options_.beta1 * m_[k] + (1.0 - options_.beta1) * p.grad;
    v_[k] = options_.beta2 * v_[k] + (1.0 - options_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m_[k].array() / bc1) /
                       ((v_[k].array() / bc2).sqrt() + options_.epsilon);
  }
}

double LinearSchedule::at(std::size_t step) const {
  if (step >= total_) return 0.0;
  return base_ * (1.0 - static_cast<double>(step) / static_cast<double>(total_));
}

}  // namespace discprop::nn
