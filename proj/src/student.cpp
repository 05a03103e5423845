#include "discprop/student.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "discprop/checkpoint.hpp"

namespace discprop {

using nlohmann::json;

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::Baseline: return "baseline";
    case Mode::Concat: return "concat";
    case Mode::Distill: return "distill";
  }
  return "baseline";
}

Mode parse_mode(const std::string& name) {
  if (name == "baseline") return Mode::Baseline;
  if (name == "concat") return Mode::Concat;
  if (name == "distill") return Mode::Distill;
  throw ConfigError("mode must be baseline, concat or distill, got '" + name + "'");
}

void LossConfig::validate() const {
  weights.validate();
  if (!(epsilon > 0.0) || epsilon > 1e-3) throw ConfigError("loss.epsilon must be in (0, 1e-3]");
}

json LossConfig::to_json() const {
  return {{"weights",
           {{"propaganda", weights.propaganda},
            {"response_local", weights.response_local},
            {"response_global", weights.response_global},
            {"relation_local", weights.relation_local},
            {"relation_global", weights.relation_global}}},
          {"relation_loss_reduction", distill::to_string(relation_reduction)},
          {"epsilon", epsilon}};
}

LossConfig LossConfig::from_json(const json& j) {
  LossConfig c;
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.propaganda = w.value("propaganda", c.weights.propaganda);
    c.weights.response_local = w.value("response_local", c.weights.response_local);
    c.weights.response_global = w.value("response_global", c.weights.response_global);
    c.weights.relation_local = w.value("relation_local", c.weights.relation_local);
    c.weights.relation_global = w.value("relation_global", c.weights.relation_global);
  }
  c.relation_reduction =
      distill::parse_reduction(j.value("relation_loss_reduction", std::string("mean")));
  c.epsilon = j.value("epsilon", c.epsilon);
  return c;
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("train.epochs must be positive");
  if (learning_rate < 0.0) throw ConfigError("train.learning_rate must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (grad_accum <= 0) throw ConfigError("train.grad_accum must be positive");
  if (head_hidden < 0) throw ConfigError("train.head_hidden must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("train.threshold must be in (0, 1)");
  loss.validate();
}

double TrainConfig::resolved_learning_rate(Backbone backbone) const {
  if (learning_rate > 0.0) return learning_rate;
  return backbone == Backbone::PretrainedLongdoc ? 1e-5 : 1e-3;
}

json TrainConfig::to_json() const {
  json ablate = json::array();
  for (auto r : ablate_relations) ablate.push_back(kRelationNames[static_cast<int>(r)]);
  return {{"epochs", epochs},
          {"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"grad_accum", grad_accum},
          {"level", distill::to_string(level)},
          {"mode", to_string(mode)},
          {"head_hidden", head_hidden},
          {"head_activation", nn::to_string(head_activation)},
          {"threshold", threshold},
          {"ablate_relations", ablate},
          {"eval_train", eval_train},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_accum = j.value("grad_accum", c.grad_accum);
  c.level = distill::parse_level(j.value("level", std::string("sentence")));
  c.mode = parse_mode(j.value("mode", std::string("distill")));
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.head_activation = nn::parse_activation(j.value("head_activation", std::string("none")));
  c.threshold = j.value("threshold", c.threshold);
  if (j.contains("ablate_relations")) {
    for (const auto& r : j.at("ablate_relations")) c.ablate_relations.push_back(parse_relation(r.get<std::string>()));
  }
  c.eval_train = j.value("eval_train", c.eval_train);
  c.seed = j.value("seed", c.seed);
  return c;
}

TeacherOutputs ablate_relation(const TeacherOutputs& outputs, Relation relation) {
  const int col = static_cast<int>(relation);
  TeacherOutputs out = outputs;
  for (Eigen::Index i = 0; i < out.p_local.rows(); ++i) {
    auto row = out.p_local.row(i);
    if (row(col) == 0.0) continue;
    row(col) = 0.0;
    const double mass = row.sum();
    if (mass > 0.0) {
      row /= mass;
    } else {
      row.setConstant(1.0 / (kNumRelations - 1));
      row(col) = 0.0;
    }
  }
  return out;
}

std::vector<bool> Prediction::sentence_labels() const {
  std::vector<bool> out;
  for (Eigen::Index i = 0; i < sentence_probs.rows(); ++i) out.push_back(sentence_probs(i, 1) > threshold);
  return out;
}

std::vector<std::vector<bool>> Prediction::token_labels() const {
  std::vector<std::vector<bool>> out;
  for (const auto& m : token_probs) {
    std::vector<bool> labels;
    for (Eigen::Index t = 0; t < m.rows(); ++t) labels.push_back(m(t, 1) > threshold);
    out.push_back(std::move(labels));
  }
  return out;
}

eval::UnitLabels Prediction::units() const {
  eval::UnitLabels out;
  if (level == Level::Sentence) {
    const auto labels = sentence_labels();
    for (std::size_t i = 0; i < labels.size(); ++i) out[{article_id, i, -1}] = labels[i];
    return out;
  }
  const auto labels = token_labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t t = 0; t < labels[i].size(); ++t) {
      out[{article_id, i, static_cast<long>(t)}] = labels[i][t];
    }
  }
  return out;
}

StudentModel::StudentModel(const EncoderConfig& encoder_config, Mode mode, Level level,
                           int head_hidden, nn::Activation activation, std::uint64_t seed,
                           bool load_backbone)
    : encoder_config_(encoder_config),
      mode_(mode),
      level_(level),
      head_hidden_(head_hidden),
      activation_(activation),
      seed_(seed),
      rng_(seed),
      encoder_(encoder_config, store_, rng_) {
  const int d = encoder_config.hidden_dim;
  const int h = head_hidden > 0 ? head_hidden : d;
  // Creation order fixes the random draws: encoder, propaganda head, then the
  // distillation heads, so baseline and distill share their common weights.
  propaganda_head_ = nn::TwoLayerHead(store_, "propaganda_head", feature_width(), h, 2, activation, rng_);
  if (mode == Mode::Distill) {
    role_head_.emplace(store_, "role_head", d, h, kNumRoles, activation, rng_);
    relation_head_.emplace(store_, "relation_head", 2 * d, h, kNumRelations, activation, rng_);
  }
  if (load_backbone) load_pretrained_encoder(encoder_config_, store_);
}

int StudentModel::feature_width() const {
  return encoder_config_.hidden_dim + (mode_ == Mode::Concat ? kTeacherFeatureWidth : 0);
}

StudentModel::Graph StudentModel::forward(ag::Tape& tape, const DocumentLayout& layout,
                                          const TeacherOutputs* teacher, bool want_local,
                                          bool want_global) const {
  Graph g;
  const EncodedGraph enc = encoder_.forward(tape, layout);
  g.sentences = enc.sentences;
  const auto n = static_cast<Eigen::Index>(layout.sentences.size());

  // Rows fed to the propaganda head and the article sentence each belongs to.
  ag::Var units = enc.sentences;
  std::vector<std::size_t> unit_sentence;
  if (level_ == Level::Sentence) {
    for (const auto& s : layout.sentences) unit_sentence.push_back(s.sentence_index);
  } else {
    std::vector<long> rows;
    for (std::size_t si = 0; si < layout.sentences.size(); ++si) {
      const auto& s = layout.sentences[si];
      for (std::size_t t = 0; t < s.alignment.size(); ++t) {
        for (std::size_t k : s.alignment[t]) {
          rows.push_back(s.subword_positions[k]);
          g.token_units.emplace_back(si, t);
          unit_sentence.push_back(s.sentence_index);
        }
      }
    }
    units = ag::gather_rows(enc.hidden, rows);
  }

  if (mode_ == Mode::Concat) {
    if (teacher == nullptr) {
      throw ValidationError("concat mode needs teacher outputs; run `discprop cache-teacher` first");
    }
    if (teacher->p_local.rows() < n || teacher->p_global.rows() < n) {
      throw ValidationError("teacher outputs for '" + teacher->article_id +
                            "' do not cover the article's sentences");
    }
    Matrix extra(static_cast<Eigen::Index>(unit_sentence.size()), kTeacherFeatureWidth);
    for (std::size_t u = 0; u < unit_sentence.size(); ++u) {
      const auto s = static_cast<Eigen::Index>(unit_sentence[u]);
      extra.row(static_cast<Eigen::Index>(u)) << teacher->p_local.row(s), teacher->p_global.row(s);
    }
    units = ag::concat_constant_cols(units, extra);
  }
  g.propaganda = propaganda_head_.probabilities(tape, units);

  if (mode_ == Mode::Distill && n > 0) {
    if (want_global) g.q_global = role_head_->probabilities(tape, enc.sentences);
    if (want_local) {
      std::vector<long> prev;
      for (Eigen::Index i = 0; i < n; ++i) prev.push_back(static_cast<long>(i) - 1);
      ag::Var pairs = ag::concat_cols({enc.sentences, ag::gather_rows(enc.sentences, prev)});
      g.q_local = relation_head_->probabilities(tape, pairs);
    }
  }
  return g;
}

StepResult StudentModel::training_step(const Article& article, const DocumentLayout& layout,
                                       const TeacherOutputs* teacher, const TrainConfig& config) {
  StepResult result;
  const auto& w = config.loss.weights;
  const bool distill_mode = mode_ == Mode::Distill;
  const bool want_local = distill_mode && w.uses_local();
  const bool want_global = distill_mode && w.uses_global();
  const auto n = static_cast<Eigen::Index>(layout.sentences.size());
  if (n == 0) {
    result.skipped = true;
    return result;
  }
  if ((want_local || want_global) && teacher == nullptr) {
    throw ValidationError("distillation needs teacher outputs for article '" + article.id +
                          "'; run `discprop cache-teacher` first");
  }
  if (want_local && (teacher->p_local.rows() < n || teacher->s_local.rows() < n)) {
    throw ValidationError("relation teacher outputs missing for article '" + article.id + "'");
  }
  if (want_global && (teacher->p_global.rows() < n || teacher->s_global.rows() < n)) {
    throw ValidationError("role teacher outputs missing for article '" + article.id + "'");
  }

  ag::Tape tape;
  const Graph g = forward(tape, layout, teacher, want_local, want_global);

  Matrix gold = Matrix::Zero(g.propaganda.rows(), 2);
  bool any_gold = false;
  if (level_ == Level::Sentence) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& s = article.sentences[layout.sentences[i].sentence_index];
      if (s.gold) {
        gold(i, static_cast<int>(*s.gold)) = 1.0;
        any_gold = true;
      }
    }
  } else {
    for (std::size_t u = 0; u < g.token_units.size(); ++u) {
      const auto [si, t] = g.token_units[u];
      const auto& tok = article.sentences[layout.sentences[si].sentence_index].tokens[t];
      if (tok.gold) {
        gold(static_cast<Eigen::Index>(u), static_cast<int>(*tok.gold)) = 1.0;
        any_gold = true;
      }
    }
  }
  if (!any_gold && !want_local && !want_global) {
    result.skipped = true;
    return result;
  }

  const double eps = config.loss.epsilon;
  const auto reduction = config.loss.relation_reduction;
  distill::LossReport& rep = result.report;
  // Same order as distill::total_loss so both sums agree bit for bit.
  std::vector<std::pair<double, ag::Var>> terms;
  if (w.propaganda > 0.0) {
    ag::Var ce = ag::cross_entropy(gold, g.propaganda, eps);
    (level_ == Level::Sentence ? rep.loss_sent_propa : rep.loss_token_propa) = ce.value()(0, 0);
    terms.emplace_back(w.propaganda, ce);
  }
  if (want_global) {
    if (w.response_global > 0.0) {
      ag::Var kl = ag::kl_divergence(teacher->p_global.topRows(n), g.q_global, eps);
      rep.loss_response_global = kl.value()(0, 0);
      terms.emplace_back(w.response_global, kl);
    }
    if (w.relation_global > 0.0) {
      ag::Var mse = ag::relation_mse(distill::spatial_matrix(teacher->s_global.topRows(n)),
                                     ag::spatial_matrix(g.sentences), reduction);
      rep.loss_relation_global = mse.value()(0, 0);
      terms.emplace_back(w.relation_global, mse);
    }
  }
  if (want_local) {
    if (w.response_local > 0.0) {
      ag::Var kl = ag::kl_divergence(teacher->p_local.topRows(n), g.q_local, eps);
      rep.loss_response_local = kl.value()(0, 0);
      terms.emplace_back(w.response_local, kl);
    }
    if (w.relation_local > 0.0) {
      ag::Var mse = ag::relation_mse(distill::spatial_matrix(teacher->s_local.topRows(n)),
                                     ag::spatial_matrix(g.sentences), reduction);
      rep.loss_relation_local = mse.value()(0, 0);
      terms.emplace_back(w.relation_local, mse);
    }
  }
  if (terms.empty()) {
    result.skipped = true;
    return result;
  }
  rep.total = distill::total_loss(rep, w, level_);
  ag::Var total = ag::weighted_sum(terms);
  tape.backward(total);
  return result;
}

Prediction StudentModel::predict(const Article& article, const TeacherOutputs* teacher,
                                 double threshold) const {
  Prediction p;
  p.article_id = article.id;
  p.level = level_;
  p.threshold = threshold;
  const auto total = static_cast<Eigen::Index>(article.sentences.size());
  p.sentence_probs = Matrix::Zero(total, 2);
  p.sentence_probs.col(0).setOnes();
  p.truncated.assign(article.sentences.size(), true);
  if (level_ == Level::Token) {
    for (const auto& s : article.sentences) {
      Matrix m = Matrix::Zero(static_cast<Eigen::Index>(s.tokens.size()), 2);
      m.col(0).setOnes();
      p.token_probs.push_back(std::move(m));
    }
  }
  if (teacher != nullptr) {
    for (Eigen::Index i = 0; i < total && i < teacher->p_global.rows(); ++i) {
      Eigen::Index rel = 0, role = 0;
      if (i < teacher->p_local.rows()) teacher->p_local.row(i).maxCoeff(&rel);
      teacher->p_global.row(i).maxCoeff(&role);
      p.explanations.push_back({static_cast<Relation>(rel), static_cast<Role>(role)});
    }
  }
  if (total == 0) return p;

  const DocumentLayout layout = encoder_.layout(article);
  if (layout.truncated) {
    spdlog::warn("article '{}' truncated to {} of {} sentences", article.id,
                 layout.sentences.size(), layout.total_sentences);
  }
  ag::Tape tape(false);
  const Graph g = forward(tape, layout, teacher, false, false);
  const Matrix& probs = g.propaganda.value();
  if (level_ == Level::Sentence) {
    for (std::size_t si = 0; si < layout.sentences.size(); ++si) {
      const auto idx = static_cast<Eigen::Index>(layout.sentences[si].sentence_index);
      p.sentence_probs.row(idx) = probs.row(static_cast<Eigen::Index>(si));
      p.truncated[idx] = false;
    }
    return p;
  }
  // Word probability = max over its subwords (any-positive rule).
  std::vector<std::vector<double>> best(layout.sentences.size());
  for (std::size_t si = 0; si < layout.sentences.size(); ++si) {
    best[si].assign(layout.sentences[si].alignment.size(), 0.0);
    p.truncated[layout.sentences[si].sentence_index] = false;
  }
  for (std::size_t u = 0; u < g.token_units.size(); ++u) {
    const auto [si, t] = g.token_units[u];
    best[si][t] = std::max(best[si][t], probs(static_cast<Eigen::Index>(u), 1));
  }
  for (std::size_t si = 0; si < layout.sentences.size(); ++si) {
    const auto idx = layout.sentences[si].sentence_index;
    double sentence_max = 0.0;
    for (std::size_t t = 0; t < best[si].size(); ++t) {
      p.token_probs[idx](static_cast<Eigen::Index>(t), 0) = 1.0 - best[si][t];
      p.token_probs[idx](static_cast<Eigen::Index>(t), 1) = best[si][t];
      sentence_max = std::max(sentence_max, best[si][t]);
    }
    p.sentence_probs(static_cast<Eigen::Index>(idx), 0) = 1.0 - sentence_max;
    p.sentence_probs(static_cast<Eigen::Index>(idx), 1) = sentence_max;
  }
  return p;
}

DistillOutputs StudentModel::forward_distill(const Article& article) const {
  if (mode_ != Mode::Distill) throw ConfigError("forward_distill needs a distill-mode model");
  DistillOutputs out;
  out.prediction = predict(article, nullptr);
  const DocumentLayout layout = encoder_.layout(article);
  const int d = encoder_config_.hidden_dim;
  if (layout.sentences.empty()) {
    out.q_local = Matrix(0, kNumRelations);
    out.q_global = Matrix(0, kNumRoles);
    out.embeddings = Matrix(0, d);
    return out;
  }
  ag::Tape tape(false);
  const Graph g = forward(tape, layout, nullptr, true, true);
  out.q_local = g.q_local.value();
  out.q_global = g.q_global.value();
  out.embeddings = g.sentences.value();
  return out;
}

json StudentModel::meta() const {
  return {{"kind", "student"},
          {"mode", to_string(mode_)},
          {"level", distill::to_string(level_)},
          {"head_hidden", head_hidden_},
          {"head_activation", nn::to_string(activation_)},
          {"seed", seed_},
          {"encoder", encoder_config_.to_json()}};
}

void StudentModel::save(const std::filesystem::path& path, const json& extra) const {
  json m = meta();
  if (!extra.is_null()) m["extra"] = extra;
  save_checkpoint(path, m, store_);
}

StudentModel StudentModel::load(const std::filesystem::path& path) {
  const auto ckpt = read_checkpoint(path);
  const auto& m = ckpt.meta;
  if (m.value("kind", std::string()) != "student") {
    throw ConfigError(path.string() + " is not a student checkpoint");
  }
  StudentModel model(EncoderConfig::from_json(m.at("encoder")), parse_mode(m.at("mode")),
                     distill::parse_level(m.at("level")), m.at("head_hidden").get<int>(),
                     nn::parse_activation(m.at("head_activation")), m.at("seed").get<std::uint64_t>(),
                     /*load_backbone=*/false);
  load_parameters(model.store_, ckpt.tensors);
  return model;
}

Prediction forward_concat(const Article& article, const TeacherOutputs& teacher,
                          const StudentModel& model, double threshold) {
  if (model.mode() != Mode::Concat) throw ConfigError("forward_concat needs a concat-mode model");
  return model.predict(article, &teacher, threshold);
}

json EpochRecord::to_json() const {
  json j = {{"epoch", epoch},
            {"learning_rate", learning_rate},
            {"loss",
             {{"loss_sent_propa", mean_loss.loss_sent_propa},
              {"loss_token_propa", mean_loss.loss_token_propa},
              {"loss_response_local", mean_loss.loss_response_local},
              {"loss_response_global", mean_loss.loss_response_global},
              {"loss_relation_local", mean_loss.loss_relation_local},
              {"loss_relation_global", mean_loss.loss_relation_global},
              {"total", mean_loss.total}}}};
  if (train_metrics) j["train"] = train_metrics->to_json();
  if (dev_metrics) j["dev"] = dev_metrics->to_json();
  return j;
}

namespace {

const TeacherOutputs* lookup(const TeacherCache* cache, const std::string& id) {
  if (cache == nullptr) return nullptr;
  const auto it = cache->find(id);
  return it == cache->end() ? nullptr : &it->second;
}

}  // namespace

eval::MetricsReport evaluate_student(const StudentModel& model, const std::vector<Article>& articles,
                                     const TeacherCache* cache, double threshold) {
  if (articles.empty()) throw ValidationError("cannot evaluate on an empty split");
  eval::UnitLabels predicted;
  for (const auto& a : articles) {
    const auto units = model.predict(a, lookup(cache, a.id), threshold).units();
    predicted.insert(units.begin(), units.end());
  }
  return eval::score(predicted, eval::gold_units(articles, model.level()), model.level());
}

TrainResult train_student(StudentModel& model, const std::vector<Article>& train,
                          const std::vector<Article>& dev, const TeacherCache* cache,
                          const TrainConfig& config) {
  config.validate();
  if (model.mode() != config.mode || model.level() != config.level) {
    throw ConfigError("model is " + to_string(model.mode()) + "/" + distill::to_string(model.level()) +
                      " but the training config asks for " + to_string(config.mode) + "/" +
                      distill::to_string(config.level));
  }
  if (train.empty()) throw ValidationError("no training articles");

  const auto& w = config.loss.weights;
  const bool needs_cache =
      config.mode == Mode::Concat || (config.mode == Mode::Distill && w.uses_distillation());
  TeacherCache ablated;
  const TeacherCache* teacher = needs_cache ? cache : nullptr;
  if (needs_cache) {
    if (cache == nullptr) {
      throw ValidationError(to_string(config.mode) +
                            " training needs teacher outputs; run `discprop cache-teacher` first");
    }
    for (const auto* split : {&train, &dev}) {
      for (const auto& a : *split) {
        if (!cache->count(a.id)) {
          throw ValidationError("no teacher outputs for article '" + a.id +
                                "'; run `discprop cache-teacher` first");
        }
      }
    }
    if (!config.ablate_relations.empty()) {
      for (const auto& [id, out] : *cache) {
        TeacherOutputs masked = out;
        for (auto r : config.ablate_relations) masked = ablate_relation(masked, r);
        ablated.emplace(id, std::move(masked));
      }
      teacher = &ablated;
    }
  }

  std::vector<DocumentLayout> layouts;
  for (const auto& a : train) layouts.push_back(model.encoder().layout(a));

  const double lr = config.resolved_learning_rate(model.encoder_config().backbone);
  nn::AdamW opt(model.parameters().all(), {lr, 0.9, 0.999, 1e-8, config.weight_decay});
  const std::size_t accum = static_cast<std::size_t>(config.grad_accum);
  const std::size_t steps_per_epoch = (train.size() + accum - 1) / accum;
  const nn::LinearSchedule schedule(lr, steps_per_epoch * static_cast<std::size_t>(config.epochs));
  std::mt19937_64 shuffle_rng(config.seed ^ 0x5deece66dULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.selected_on_dev = !dev.empty();
  std::string best_params;
  distill::LossReport last_finite;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord record;
    record.epoch = epoch;
    std::size_t counted = 0;
    std::size_t pending = 0;
    model.parameters().zero_grad();
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& article = train[order[k]];
      StepResult step;
      try {
        step = model.training_step(article, layouts[order[k]], lookup(teacher, article.id), config);
      } catch (const NumericalError& e) {
        throw TrainingDiverged(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                   ", article '" + article.id + "')",
                               last_finite);
      }
      if (!step.skipped) {
        if (!std::isfinite(step.report.total)) {
          throw TrainingDiverged("non-finite total loss on article '" + article.id + "'", last_finite);
        }
        last_finite = step.report;
        record.mean_loss += step.report;
        result.step_losses.push_back(step.report);
        ++counted;
      }
      ++pending;
      if (pending == accum || k + 1 == order.size()) {
        record.learning_rate = schedule.at(opt.steps());
        opt.step(record.learning_rate);
        model.parameters().zero_grad();
        pending = 0;
      }
    }
    if (counted > 0) record.mean_loss = record.mean_loss.scaled(1.0 / static_cast<double>(counted));

    if (!dev.empty()) record.dev_metrics = evaluate_student(model, dev, teacher, config.threshold);
    if (config.eval_train || dev.empty()) {
      record.train_metrics = evaluate_student(model, train, teacher, config.threshold);
    }
    const double f1 = dev.empty() ? record.train_metrics->f1 : record.dev_metrics->f1;
    if (result.best_epoch < 0 || f1 > result.best_f1) {
      result.best_epoch = epoch;
      result.best_f1 = f1;
      best_params = serialize_parameters(model.parameters());
    }
    spdlog::debug("epoch {}: loss {:.6f}, selection F1 {:.4f}", epoch, record.mean_loss.total, f1);
    result.history.push_back(std::move(record));
  }
  load_parameters(model.parameters(), best_params);
  return result;
}

}  // namespace discprop
