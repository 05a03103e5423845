#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "discprop/corpus.hpp"
#include "discprop/distill.hpp"
#include "discprop/encoder.hpp"
#include "discprop/errors.hpp"
#include "discprop/eval.hpp"
#include "discprop/nn.hpp"
#include "discprop/teachers.hpp"

namespace discprop {

using distill::Level;

enum class Mode { Baseline, Concat, Distill };
std::string to_string(Mode mode);
Mode parse_mode(const std::string& name);

// Width of the appended teacher features: 4 relation + 8 role probabilities.
inline constexpr int kTeacherFeatureWidth = kNumRelations + kNumRoles;

struct LossConfig {
  distill::LossWeights weights;
  distill::Reduction relation_reduction = distill::Reduction::Mean;
  double epsilon = distill::kDefaultEpsilon;

  void validate() const;
  nlohmann::json to_json() const;
  static LossConfig from_json(const nlohmann::json& j);
};

struct TrainConfig {
  int epochs = 6;
  // 0 selects the backbone default: 1e-5 pretrained, 1e-3 toy.
  double learning_rate = 0.0;
  double weight_decay = 1e-2;
  int grad_accum = 1;  // articles per optimizer step
  Level level = Level::Sentence;
  Mode mode = Mode::Distill;
  int head_hidden = 0;  // 0 means h = d
  nn::Activation head_activation = nn::Activation::None;
  double threshold = 0.5;
  std::vector<Relation> ablate_relations;  // masked out of P_local at consumption
  bool eval_train = false;                 // score the train split after every epoch
  std::uint64_t seed = 13;
  LossConfig loss;

  void validate() const;
  double resolved_learning_rate(Backbone backbone) const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Zeroes the relation's column of P_local and renormalises each row. A row
// left with no mass becomes uniform over the remaining three relations.
TeacherOutputs ablate_relation(const TeacherOutputs& outputs, Relation relation);

struct Explanation {
  Relation relation = Relation::Comparison;
  Role role = Role::M1;
};

struct Prediction {
  std::string article_id;
  Level level = Level::Sentence;
  double threshold = 0.5;
  // Row per article sentence, (benign, propaganda). Sentences lost to
  // truncation are (1, 0) and flagged.
  Matrix sentence_probs;
  std::vector<bool> truncated;
  // Token level only: per sentence, one (benign, propaganda) row per word;
  // the word's propaganda probability is the max over its subwords.
  std::vector<Matrix> token_probs;
  std::vector<Explanation> explanations;  // empty without teacher outputs

  std::vector<bool> sentence_labels() const;
  std::vector<std::vector<bool>> token_labels() const;
  eval::UnitLabels units() const;
};

// Distill-mode raw outputs for surviving sentences.
struct DistillOutputs {
  Prediction prediction;
  Matrix q_local;     // n x 4
  Matrix q_global;    // n x 8
  Matrix embeddings;  // n x d
};

// Values of one training step. Gradients are left in the model parameters.
struct StepResult {
  distill::LossReport report;
  bool skipped = false;  // nothing to score in this article
};

class StudentModel {
 public:
  StudentModel(const EncoderConfig& encoder_config, Mode mode, Level level, int head_hidden,
               nn::Activation activation, std::uint64_t seed, bool load_backbone = true);

  Mode mode() const { return mode_; }
  Level level() const { return level_; }
  const Encoder& encoder() const { return encoder_; }
  const EncoderConfig& encoder_config() const { return encoder_config_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  // Input width of the propaganda head: d, or d + 12 in concat mode.
  int feature_width() const;

  // Graph pieces for one article.
  struct Graph {
    ag::Var propaganda;  // units x 2 probabilities
    ag::Var q_local;     // n x 4 (distill, when requested)
    ag::Var q_global;    // n x 8 (distill, when requested)
    ag::Var sentences;   // n x d student sentence embeddings
    std::vector<std::pair<std::size_t, std::size_t>> token_units;  // (layout sentence, token) per row
  };
  Graph forward(ag::Tape& tape, const DocumentLayout& layout, const TeacherOutputs* teacher,
                bool want_local, bool want_global) const;

  StepResult training_step(const Article& article, const DocumentLayout& layout,
                           const TeacherOutputs* teacher, const TrainConfig& config);

  Prediction predict(const Article& article, const TeacherOutputs* teacher,
                     double threshold = 0.5) const;
  DistillOutputs forward_distill(const Article& article) const;

  nlohmann::json meta() const;
  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
  static StudentModel load(const std::filesystem::path& path);

 private:
  EncoderConfig encoder_config_;
  Mode mode_;
  Level level_;
  int head_hidden_;
  nn::Activation activation_;
  std::uint64_t seed_;
  nn::ParameterStore store_;
  nn::Rng rng_;
  Encoder encoder_;
  nn::TwoLayerHead propaganda_head_;
  std::optional<nn::TwoLayerHead> role_head_;      // d -> h -> 8
  std::optional<nn::TwoLayerHead> relation_head_;  // 2d -> h -> 4
};

// Prediction for a feature-concatenation model; teacher outputs are required.
Prediction forward_concat(const Article& article, const TeacherOutputs& teacher,
                          const StudentModel& model, double threshold = 0.5);

struct EpochRecord {
  int epoch = 0;
  distill::LossReport mean_loss;
  double learning_rate = 0.0;  // at the epoch's last step
  std::optional<eval::MetricsReport> train_metrics;
  std::optional<eval::MetricsReport> dev_metrics;
  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<distill::LossReport> step_losses;
  int best_epoch = -1;
  double best_f1 = 0.0;
  bool selected_on_dev = false;
};

// Raised when a loss turns NaN/Inf; carries the last finite step report.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, distill::LossReport last_finite)
      : NumericalError(what), last_finite_(last_finite) {}
  const distill::LossReport& last_finite() const { return last_finite_; }

 private:
  distill::LossReport last_finite_;
};

using TeacherCache = std::map<std::string, TeacherOutputs>;

// Trains in place, one article per step with `grad_accum` accumulation, AdamW
// and linear decay. Restores the epoch with the best dev propaganda F1 (train
// F1 without a dev set, ties keep the earlier epoch). Concat mode and
// distillation terms with non-zero weight need teacher outputs for every
// article.
TrainResult train_student(StudentModel& model, const std::vector<Article>& train,
                          const std::vector<Article>& dev, const TeacherCache* cache,
                          const TrainConfig& config);

eval::MetricsReport evaluate_student(const StudentModel& model,
                                     const std::vector<Article>& articles,
                                     const TeacherCache* cache, double threshold = 0.5);

}  // namespace discprop
