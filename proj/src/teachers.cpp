#include "discprop/teachers.hpp"

#include <algorithm>
#include <numeric>

#include <spdlog/spdlog.h>

#include "discprop/checkpoint.hpp"
#include "discprop/errors.hpp"
#include "discprop/eval.hpp"

namespace discprop {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(TeacherKind kind) {
  return kind == TeacherKind::Relation ? "relation" : "role";
}

TeacherKind parse_teacher_kind(const std::string& name) {
  if (name == "relation") return TeacherKind::Relation;
  if (name == "role") return TeacherKind::Role;
  throw ConfigError("teacher kind must be 'relation' or 'role', got '" + name + "'");
}

void TeacherConfig::validate() const {
  if (epochs <= 0) throw ConfigError("teacher.epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("teacher.learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("teacher.weight_decay must be >= 0");
  if (head_hidden < 0) throw ConfigError("teacher.head_hidden must be >= 0");
}

json TeacherConfig::to_json() const {
  return {{"epochs", epochs},
          {"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"head_hidden", head_hidden},
          {"head_activation", nn::to_string(head_activation)},
          {"seed", seed}};
}

TeacherConfig TeacherConfig::from_json(const json& j) {
  TeacherConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.head_activation = nn::parse_activation(j.value("head_activation", std::string("none")));
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

int head_input(TeacherKind kind, int d) { return kind == TeacherKind::Relation ? 2 * d : d; }

// Rows [s_{i-1} ⊕ s_i] for every surviving sentence, zero partner at i = 0.
ag::Var pair_rows(ag::Var sentences) {
  std::vector<long> prev;
  for (Eigen::Index i = 0; i < sentences.rows(); ++i) prev.push_back(static_cast<long>(i) - 1);
  return ag::concat_cols({ag::gather_rows(sentences, prev), sentences});
}

Matrix uniform_rows(Eigen::Index n, int k) { return Matrix::Constant(n, k, 1.0 / k); }

}  // namespace

Teacher::Teacher(TeacherKind kind, const EncoderConfig& encoder_config, const TeacherConfig& config,
                 bool load_backbone)
    : kind_(kind),
      encoder_config_(encoder_config),
      config_(config),
      rng_(config.seed),
      encoder_(encoder_config, store_, rng_),
      head_(store_, to_string(kind) + "_head", head_input(kind, encoder_config.hidden_dim),
            config.head_hidden > 0 ? config.head_hidden : encoder_config.hidden_dim,
            kind == TeacherKind::Relation ? kNumRelations : kNumRoles, config.head_activation,
            rng_) {
  config_.validate();
  if (load_backbone) load_pretrained_encoder(encoder_config_, store_);
}

Matrix Teacher::predict(const DocumentEncoding& encoding) const {
  const auto n = static_cast<Eigen::Index>(encoding.sentence_count());
  const int d = encoder_.hidden_dim();
  if (encoding.sentence_embeddings.cols() != d || head_.in_dim() != head_input(kind_, d)) {
    throw ConfigError(to_string(kind_) + " teacher: encoder width " +
                      std::to_string(encoding.sentence_embeddings.cols()) +
                      " does not match head input " + std::to_string(head_.in_dim()));
  }
  if (n == 0) return Matrix(0, classes());
  if (kind_ == TeacherKind::Role) return head_.predict(encoding.sentence_embeddings);
  Matrix out = uniform_rows(n, kNumRelations);
  if (n > 1) {
    Matrix pairs(n - 1, 2 * d);
    for (Eigen::Index i = 1; i < n; ++i) {
      pairs.row(i - 1) = pair_embedding(encoding, static_cast<std::size_t>(i));
    }
    out.bottomRows(n - 1) = head_.predict(pairs);
  }
  return out;
}

ag::Var Teacher::logits(ag::Tape& tape, const DocumentLayout& layout) const {
  const EncodedGraph g = encoder_.forward(tape, layout);
  if (kind_ == TeacherKind::Role) return head_.logits(tape, g.sentences);
  if (g.sentences.rows() < 2) {
    throw ValidationError("relation pair lost its second argument to truncation");
  }
  return head_.logits(tape, ag::gather_rows(pair_rows(g.sentences), {1}));
}

std::string Teacher::hash() const { return parameter_hash(store_); }

void Teacher::save(const fs::path& path) const {
  const json meta = {{"kind", to_string(kind_)},
                     {"encoder", encoder_config_.to_json()},
                     {"teacher", config_.to_json()}};
  save_checkpoint(path, meta, store_);
}

Teacher Teacher::load(const fs::path& path) {
  const auto ckpt = read_checkpoint(path);
  const auto& meta = ckpt.meta;
  if (!meta.contains("kind") || !meta.contains("encoder")) {
    throw ConfigError(path.string() + " is not a teacher checkpoint");
  }
  Teacher t(parse_teacher_kind(meta.at("kind").get<std::string>()),
            EncoderConfig::from_json(meta.at("encoder")),
            TeacherConfig::from_json(meta.value("teacher", json::object())),
            /*load_backbone=*/false);
  load_parameters(t.store_, ckpt.tensors);
  return t;
}

Article pair_article(const RelationPair& pair) {
  const std::vector<std::string> sentences = {pair.arg1, pair.arg2};
  return make_article_from_sentences("pair", sentences, pair.split);
}

Article role_article(const RoleDocument& doc) {
  std::vector<std::string> sentences;
  for (const auto& s : doc.sentences) sentences.push_back(s.text);
  return make_article_from_sentences(doc.doc_id, sentences, doc.split);
}

namespace {

struct Example {
  DocumentLayout layout;
  std::vector<int> labels;  // one per scored unit
};

void require_all_classes(const std::vector<Example>& train, int classes, TeacherKind kind) {
  std::vector<std::size_t> hist(classes, 0);
  for (const auto& ex : train) {
    for (int y : ex.labels) ++hist[y];
  }
  for (int c = 0; c < classes; ++c) {
    if (hist[c] == 0) {
      const auto name = kind == TeacherKind::Relation ? kRelationNames[c] : kRoleNames[c];
      throw ValidationError(to_string(kind) + " teacher: class '" + std::string(name) +
                            "' has no training examples");
    }
  }
}

std::vector<int> argmax_rows(const Matrix& p) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best;
    p.row(i).maxCoeff(&best);
    out.push_back(static_cast<int>(best));
  }
  return out;
}

std::vector<int> predict_examples(const Teacher& teacher, const std::vector<Example>& examples) {
  std::vector<int> out;
  for (const auto& ex : examples) {
    ag::Tape tape(false);
    const auto pred = argmax_rows(distill::softmax_rows(teacher.logits(tape, ex.layout).value()));
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

std::vector<int> gold_of(const std::vector<Example>& examples) {
  std::vector<int> out;
  for (const auto& ex : examples) out.insert(out.end(), ex.labels.begin(), ex.labels.end());
  return out;
}

Teacher fit_teacher(TeacherKind kind, const std::vector<Example>& train,
                    const std::vector<Example>& dev, const EncoderConfig& encoder_config,
                    const TeacherConfig& config, TeacherTrainingReport* report) {
  if (train.empty()) throw ValidationError(to_string(kind) + " teacher: no training data");
  Teacher teacher(kind, encoder_config, config);
  require_all_classes(train, teacher.classes(), kind);

  auto params = teacher.parameters().all();
  nn::AdamW opt(params, {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  const nn::LinearSchedule schedule(config.learning_rate,
                                    static_cast<std::size_t>(config.epochs) * train.size());
  std::mt19937_64 shuffle_rng(config.seed ^ 0x5deece66dULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TeacherTrainingReport local;
  TeacherTrainingReport& rep = report ? *report : local;
  rep = {};
  rep.selected_on_dev = !dev.empty();
  const auto& selection = dev.empty() ? train : dev;
  const auto selection_gold = gold_of(selection);
  const auto train_gold = gold_of(train);
  std::string best_params;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t idx : order) {
      const auto& ex = train[idx];
      teacher.parameters().zero_grad();
      ag::Tape tape;
      ag::Var probs = ag::softmax_rows(teacher.logits(tape, ex.layout));
      Matrix gold = Matrix::Zero(probs.rows(), teacher.classes());
      for (std::size_t u = 0; u < ex.labels.size(); ++u) gold(static_cast<Eigen::Index>(u), ex.labels[u]) = 1.0;
      ag::Var loss = ag::cross_entropy(gold, probs, distill::kDefaultEpsilon);
      if (!std::isfinite(loss.value()(0, 0))) {
        throw NumericalError(to_string(kind) + " teacher: non-finite training loss");
      }
      tape.backward(loss);
      opt.step(schedule.at(opt.steps()));
    }
    const auto train_pred = predict_examples(teacher, train);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < train_pred.size(); ++i) correct += train_pred[i] == train_gold[i];
    rep.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(train_gold.size()));
    const auto sel_pred = dev.empty() ? train_pred : predict_examples(teacher, selection);
    const double f1 = eval::macro_f1(selection_gold, sel_pred, teacher.classes());
    rep.selection_macro_f1.push_back(f1);
    if (rep.best_epoch < 0 || f1 > rep.best_macro_f1) {
      rep.best_epoch = epoch;
      rep.best_macro_f1 = f1;
      best_params = serialize_parameters(teacher.parameters());
    }
    spdlog::debug("{} teacher epoch {}: train acc {:.4f}, selection macro-F1 {:.4f}",
                  to_string(kind), epoch, rep.train_accuracy.back(), f1);
  }
  load_parameters(teacher.parameters(), best_params);
  return teacher;
}

}  // namespace

Teacher train_relation_teacher(const std::vector<RelationPair>& pairs,
                               const EncoderConfig& encoder_config, const TeacherConfig& config,
                               TeacherTrainingReport* report) {
  std::vector<Example> train, dev;
  for (const auto& p : pairs) {
    if (p.split == Split::Test) continue;
    Example ex{build_layout(pair_article(p), encoder_config), {static_cast<int>(p.relation)}};
    (p.split == Split::Dev ? dev : train).push_back(std::move(ex));
  }
  return fit_teacher(TeacherKind::Relation, train, dev, encoder_config, config, report);
}

Teacher train_role_teacher(const std::vector<RoleDocument>& docs,
                           const EncoderConfig& encoder_config, const TeacherConfig& config,
                           TeacherTrainingReport* report) {
  std::vector<Example> train, dev;
  for (const auto& doc : docs) {
    if (doc.split == Split::Test || doc.sentences.empty()) continue;
    Example ex;
    ex.layout = build_layout(role_article(doc), encoder_config);
    for (std::size_t s = 0; s < ex.layout.sentences.size(); ++s) {
      ex.labels.push_back(static_cast<int>(doc.sentences[ex.layout.sentences[s].sentence_index].role));
    }
    (doc.split == Split::Dev ? dev : train).push_back(std::move(ex));
  }
  return fit_teacher(TeacherKind::Role, train, dev, encoder_config, config, report);
}

std::vector<int> predict_relations(const Teacher& teacher, const std::vector<RelationPair>& pairs) {
  std::vector<int> out;
  for (const auto& p : pairs) {
    const auto enc = teacher.encoder().encode(pair_article(p));
    out.push_back(argmax_rows(teacher.predict(enc)).back());
  }
  return out;
}

std::vector<int> predict_roles(const Teacher& teacher, const RoleDocument& doc) {
  return argmax_rows(teacher.predict(teacher.encoder().encode(role_article(doc))));
}

bool TeacherOutputs::operator==(const TeacherOutputs& o) const {
  const auto same = [](const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return article_id == o.article_id && teacher_hash == o.teacher_hash && same(p_local, o.p_local) &&
         same(p_global, o.p_global) && same(s_local, o.s_local) && same(s_global, o.s_global);
}

TeacherOutputs infer_teacher_outputs(const Article& article, const Teacher& relation,
                                     const Teacher& role) {
  if (relation.kind() != TeacherKind::Relation || role.kind() != TeacherKind::Role) {
    throw ConfigError("infer_teacher_outputs: expected a relation and a role teacher");
  }
  const auto n = static_cast<Eigen::Index>(article.sentences.size());
  TeacherOutputs out;
  out.article_id = article.id;
  out.teacher_hash = teacher_pair_hash(relation, role);
  out.p_local = uniform_rows(n, kNumRelations);
  out.p_global = uniform_rows(n, kNumRoles);
  out.s_local = Matrix::Zero(n, relation.encoder().hidden_dim());
  out.s_global = Matrix::Zero(n, role.encoder().hidden_dim());

  const auto rel_enc = relation.encoder().encode(article);
  const Matrix p_rel = relation.predict(rel_enc);
  const auto role_enc = role.encoder().encode(article);
  const Matrix p_role = role.predict(role_enc);
  // Surviving sentences form a prefix of the article.
  const Eigen::Index nr = p_rel.rows();
  const Eigen::Index ng = p_role.rows();
  out.p_local.topRows(nr) = p_rel;
  out.s_local.topRows(nr) = rel_enc.sentence_embeddings;
  out.p_global.topRows(ng) = p_role;
  out.s_global.topRows(ng) = role_enc.sentence_embeddings;
  return out;
}

std::string teacher_pair_hash(const Teacher& relation, const Teacher& role) {
  return sha256_hex(relation.hash() + ":" + role.hash());
}

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, Eigen::Index expected_cols = -1) {
  const auto n = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = n > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  if (n == 0 && expected_cols >= 0) cols = expected_cols;
  Matrix m(n, cols);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ParseError("ragged matrix in cache record");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  if (expected_cols >= 0 && cols != expected_cols) {
    throw ParseError("cache record matrix has " + std::to_string(cols) + " columns, expected " +
                     std::to_string(expected_cols));
  }
  return m;
}

}  // namespace

json to_json(const TeacherOutputs& o) {
  return {{"article_id", o.article_id},
          {"p_local", matrix_to_json(o.p_local)},
          {"p_global", matrix_to_json(o.p_global)},
          {"s_local", matrix_to_json(o.s_local)},
          {"s_global", matrix_to_json(o.s_global)},
          {"teacher_hash", o.teacher_hash}};
}

TeacherOutputs teacher_outputs_from_json(const json& j) {
  TeacherOutputs o;
  try {
    o.article_id = j.at("article_id").get<std::string>();
    o.p_local = matrix_from_json(j.at("p_local"), kNumRelations);
    o.p_global = matrix_from_json(j.at("p_global"), kNumRoles);
    o.s_local = matrix_from_json(j.at("s_local"));
    o.s_global = matrix_from_json(j.at("s_global"));
    o.teacher_hash = j.at("teacher_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad teacher cache record: ") + e.what());
  }
  return o;
}

fs::path cache_file(const fs::path& cache_dir, const std::string& article_id) {
  return cache_dir / (article_id + ".json");
}

std::optional<TeacherOutputs> load_cached_outputs(const fs::path& cache_dir,
                                                  const std::string& article_id,
                                                  const std::string& expected_hash) {
  const auto path = cache_file(cache_dir, article_id);
  if (!fs::exists(path)) return std::nullopt;
  try {
    auto out = teacher_outputs_from_json(json::parse(read_bytes(path)));
    if (out.article_id != article_id) return std::nullopt;
    if (!expected_hash.empty() && out.teacher_hash != expected_hash) return std::nullopt;
    return out;
  } catch (const std::exception& e) {
    spdlog::warn("unreadable teacher cache record {}: {}", path.string(), e.what());
    return std::nullopt;
  }
}

CacheManifest cache_teacher_outputs(const std::vector<Article>& articles, const Teacher& relation,
                                    const Teacher& role, const fs::path& cache_dir) {
  fs::create_directories(cache_dir);
  CacheManifest manifest;
  manifest.teacher_hash = teacher_pair_hash(relation, role);
  for (const auto& article : articles) {
    const auto cached = load_cached_outputs(cache_dir, article.id, manifest.teacher_hash);
    const bool fresh = cached && static_cast<std::size_t>(cached->p_local.rows()) ==
                                     article.sentences.size();
    if (fresh) {
      ++manifest.reused;
    } else {
      write_atomic(cache_file(cache_dir, article.id),
                   to_json(infer_teacher_outputs(article, relation, role)).dump());
      ++manifest.computed;
    }
    manifest.records.push_back(
        {article.id, cache_file(cache_dir, article.id).filename().string(), manifest.teacher_hash});
  }
  json records = json::array();
  for (const auto& r : manifest.records) {
    records.push_back({{"article_id", r.article_id}, {"file", r.file}, {"teacher_hash", r.teacher_hash}});
  }
  write_atomic(cache_dir / "manifest.json",
               json({{"teacher_hash", manifest.teacher_hash}, {"records", records}}).dump(2));
  return manifest;
}

std::map<std::string, TeacherOutputs> load_teacher_cache(const fs::path& cache_dir,
                                                         const std::vector<Article>& articles) {
  std::map<std::string, TeacherOutputs> out;
  for (const auto& a : articles) {
    auto rec = load_cached_outputs(cache_dir, a.id);
    if (!rec) {
      throw ValidationError("no teacher cache record for article '" + a.id + "' in " +
                            cache_dir.string() + "; run `discprop cache-teacher` first");
    }
    out.emplace(a.id, std::move(*rec));
  }
  return out;
}

}  // namespace discprop
