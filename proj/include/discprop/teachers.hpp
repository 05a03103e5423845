#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "discprop/corpus.hpp"
#include "discprop/encoder.hpp"
#include "discprop/nn.hpp"

namespace discprop {

enum class TeacherKind { Relation, Role };
std::string to_string(TeacherKind kind);
TeacherKind parse_teacher_kind(const std::string& name);

struct TeacherConfig {
  int epochs = 30;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  int head_hidden = 0;  // 0 means h = d
  nn::Activation head_activation = nn::Activation::None;
  std::uint64_t seed = 13;

  void validate() const;
  nlohmann::json to_json() const;
  static TeacherConfig from_json(const nlohmann::json& j);
};

// A frozen discourse classifier: its own encoder plus a two-layer softmax head.
// Relation: [s_{i-1} ⊕ s_i] (2d) -> h -> 4. Role: s_i (d) -> h -> 8.
class Teacher {
 public:
  // A pretrained backbone reads encoder_config.checkpoint unless
  // load_backbone is false (weights about to be overwritten).
  Teacher(TeacherKind kind, const EncoderConfig& encoder_config, const TeacherConfig& config,
          bool load_backbone = true);

  TeacherKind kind() const { return kind_; }
  int classes() const { return kind_ == TeacherKind::Relation ? kNumRelations : kNumRoles; }
  const Encoder& encoder() const { return encoder_; }
  const nn::TwoLayerHead& head() const { return head_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const TeacherConfig& config() const { return config_; }

  // Per-sentence class distribution for every surviving sentence; for the
  // relation teacher row 0 is uniform (no preceding sentence).
  Matrix predict(const DocumentEncoding& encoding) const;
  // Logits on the training graph for the unit(s) a training example scores.
  ag::Var logits(ag::Tape& tape, const DocumentLayout& layout) const;

  std::string hash() const;
  void save(const std::filesystem::path& path) const;
  static Teacher load(const std::filesystem::path& path);

 private:
  TeacherKind kind_;
  EncoderConfig encoder_config_;
  TeacherConfig config_;
  nn::ParameterStore store_;
  nn::Rng rng_;
  Encoder encoder_;
  nn::TwoLayerHead head_;
};

struct TeacherTrainingReport {
  std::vector<double> train_accuracy;  // per epoch, before selection
  std::vector<double> selection_macro_f1;
  int best_epoch = -1;
  double best_macro_f1 = 0.0;
  bool selected_on_dev = false;
};

// Cross-entropy training; keeps the epoch with the best dev macro-F1 (train
// macro-F1 when the corpus has no dev split). Aborts when a class has no
// training example.
Teacher train_relation_teacher(const std::vector<RelationPair>& pairs,
                               const EncoderConfig& encoder_config, const TeacherConfig& config,
                               TeacherTrainingReport* report = nullptr);
Teacher train_role_teacher(const std::vector<RoleDocument>& docs,
                           const EncoderConfig& encoder_config, const TeacherConfig& config,
                           TeacherTrainingReport* report = nullptr);

// Predictions of a trained teacher on held-out relation pairs / role documents.
std::vector<int> predict_relations(const Teacher& teacher, const std::vector<RelationPair>& pairs);
std::vector<int> predict_roles(const Teacher& teacher, const RoleDocument& doc);

Article pair_article(const RelationPair& pair);
Article role_article(const RoleDocument& doc);

struct TeacherOutputs {
  std::string article_id;
  Matrix p_local;   // n x 4
  Matrix p_global;  // n x 8
  Matrix s_local;   // n x d_relation
  Matrix s_global;  // n x d_role
  std::string teacher_hash;

  bool has_local() const { return p_local.rows() > 0 || s_local.rows() > 0; }
  bool operator==(const TeacherOutputs& other) const;
};

// Rows cover every article sentence; sentences truncated away by a teacher's
// input budget get a uniform distribution and a zero embedding.
TeacherOutputs infer_teacher_outputs(const Article& article, const Teacher& relation,
                                     const Teacher& role);

// Combined identity of a (relation, role) teacher pair.
std::string teacher_pair_hash(const Teacher& relation, const Teacher& role);

nlohmann::json to_json(const TeacherOutputs& outputs);
TeacherOutputs teacher_outputs_from_json(const nlohmann::json& j);

struct CacheRecord {
  std::string article_id;
  std::string file;
  std::string teacher_hash;
};

struct CacheManifest {
  std::string teacher_hash;
  std::vector<CacheRecord> records;
  std::size_t computed = 0;
  std::size_t reused = 0;
};

// One `<article_id>.json` per article plus `manifest.json`. Existing records
// with the current teacher hash are reused; stale or unreadable ones are
// recomputed. Every write is write-temp-then-rename.
CacheManifest cache_teacher_outputs(const std::vector<Article>& articles, const Teacher& relation,
                                    const Teacher& role, const std::filesystem::path& cache_dir);

// nullopt when the record is missing, unreadable, or (with a non-empty
// expected_hash) produced by different teachers.
std::optional<TeacherOutputs> load_cached_outputs(const std::filesystem::path& cache_dir,
                                                  const std::string& article_id,
                                                  const std::string& expected_hash = {});

// Every article must be cached; the error names the first missing one and
// points at `cache-teacher`.
std::map<std::string, TeacherOutputs> load_teacher_cache(const std::filesystem::path& cache_dir,
                                                         const std::vector<Article>& articles);

std::filesystem::path cache_file(const std::filesystem::path& cache_dir,
                                 const std::string& article_id);

}  // namespace discprop
