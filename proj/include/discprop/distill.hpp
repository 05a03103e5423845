#pragma once

#include <string>

#include "discprop/tensor.hpp"

namespace discprop::distill {

inline constexpr double kDefaultEpsilon = 1e-12;

// All losses here take the student-side quantity last and return d(loss)/d(it)
// through the matching *_grad function. Teacher-side arguments are constants.

// -sum_i sum_c P_ic log Q_ic. P rows are one-hot gold labels; all-zero rows
// (unlabeled or truncated units) contribute nothing. Q is clamped below at eps.
double propaganda_ce(const Matrix& gold, const Matrix& q, double eps = kDefaultEpsilon);
Matrix propaganda_ce_grad(const Matrix& gold, const Matrix& q, double eps = kDefaultEpsilon);

// Forward KL from the teacher distribution: sum_i sum_c P_ic log(P_ic / Q_ic).
// Cells with P_ic = 0 contribute 0.
double response_kl(const Matrix& p_teacher, const Matrix& q_student,
                   double eps = kDefaultEpsilon);
Matrix response_kl_grad(const Matrix& p_teacher, const Matrix& q_student,
                        double eps = kDefaultEpsilon);

// M_ik = cosine(s_i, s_k), unit diagonal. A zero-norm row has cosine 0 with
// every other row (a warning is logged).
Matrix spatial_matrix(const Matrix& embeddings);
// Pulls d(loss)/dM back to d(loss)/dS. The diagonal of M is constant.
Matrix spatial_matrix_backward(const Matrix& embeddings, const Matrix& grad_m);

enum class Reduction { Mean, Sum };
Reduction parse_reduction(const std::string& name);
std::string to_string(Reduction reduction);

// Squared difference over ordered off-diagonal pairs; Mean divides by n(n-1).
// n = 1 gives 0.
double relation_mse(const Matrix& m_teacher, const Matrix& m_student,
                    Reduction reduction = Reduction::Mean);
Matrix relation_mse_grad(const Matrix& m_teacher, const Matrix& m_student,
                         Reduction reduction = Reduction::Mean);

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

struct LossWeights {
  double propaganda = 1.0;
  double response_local = 1.0;
  double response_global = 1.0;
  double relation_local = 1.0;
  double relation_global = 1.0;

  void validate() const;
  bool uses_local() const { return response_local > 0.0 || relation_local > 0.0; }
  bool uses_global() const { return response_global > 0.0 || relation_global > 0.0; }
  bool uses_distillation() const { return uses_local() || uses_global(); }
};

enum class Level { Sentence, Token };
Level parse_level(const std::string& name);
std::string to_string(Level level);

struct LossReport {
  double loss_sent_propa = 0.0;
  double loss_token_propa = 0.0;
  double loss_response_local = 0.0;
  double loss_response_global = 0.0;
  double loss_relation_local = 0.0;
  double loss_relation_global = 0.0;
  double total = 0.0;

  LossReport& operator+=(const LossReport& other);
  LossReport scaled(double factor) const;
};

// Weighted objective for one level:
//   w_p * CE_level + (w_rg * KL_global + w_sg * MSE_global)
//                  + (w_rl * KL_local  + w_sl * MSE_local).
// Terms with weight 0 are dropped outright. Throws NumericalError naming the
// first non-finite part that would contribute.
double total_loss(const LossReport& parts, const LossWeights& weights, Level level);

}  // namespace discprop::distill
