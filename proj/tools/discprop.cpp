// discprop: teachers, cache, students, evaluation and analysis from one config.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "discprop/checkpoint.hpp"
#include "discprop/config.hpp"
#include "discprop/corpus.hpp"
#include "discprop/errors.hpp"
#include "discprop/eval.hpp"
#include "discprop/student.hpp"
#include "discprop/teachers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace discprop;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string level;
  std::vector<std::string> ablate_loss;
  std::vector<std::string> ablate_relation;
  bool verbose = false;
};

void zero_weight(distill::LossWeights& w, const std::string& name) {
  if (name == "propaganda") w.propaganda = 0.0;
  else if (name == "response_local") w.response_local = 0.0;
  else if (name == "response_global") w.response_global = 0.0;
  else if (name == "relation_local") w.relation_local = 0.0;
  else if (name == "relation_global") w.relation_global = 0.0;
  else if (name == "local") w.response_local = w.relation_local = 0.0;
  else if (name == "global") w.response_global = w.relation_global = 0.0;
  else if (name == "response") w.response_local = w.response_global = 0.0;
  else if (name == "relation") w.relation_local = w.relation_global = 0.0;
  else throw ConfigError("unknown --ablate-loss term '" + name + "'");
}

RunConfig resolve(const Common& c) {
  std::vector<std::string> overrides = c.overrides;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  if (!c.mode.empty()) overrides.push_back("train.mode=\"" + c.mode + "\"");
  if (!c.level.empty()) overrides.push_back("train.level=\"" + c.level + "\"");
  RunConfig cfg = load_run_config(c.config_path, overrides, environment_with_prefix());
  for (const auto& term : c.ablate_loss) zero_weight(cfg.train.loss.weights, term);
  for (const auto& r : c.ablate_relation) cfg.train.ablate_relations.push_back(parse_relation(r));
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--set", c.overrides, "Override, e.g. --set train.epochs=3");
  app->add_option("--seed", c.seed, "Seed for every random draw");
  app->add_option("--mode", c.mode, "baseline | concat | distill");
  app->add_option("--level", c.level, "sentence | token");
  app->add_option("--ablate-loss", c.ablate_loss,
                  "Zero a loss term: response_local, relation_global, local, global, ...");
  app->add_option("--ablate-relation", c.ablate_relation,
                  "Mask a relation out of P_local: Comparison, Contingency, Temporal, Expansion");
  app->add_flag("-v,--verbose", c.verbose, "Debug logging");
}

std::vector<Article> load_corpus(const RunConfig& cfg) {
  if (cfg.paths.articles_dir.empty() || cfg.paths.split_manifest.empty()) {
    throw ConfigError("paths.articles_dir and paths.split_manifest are required");
  }
  auto articles = load_propaganda_corpus(cfg.paths.articles_dir, cfg.paths.spans_file,
                                         cfg.paths.split_manifest);
  if (!cfg.paths.sentence_labels.empty()) apply_sentence_labels(articles, cfg.paths.sentence_labels);
  return articles;
}

std::vector<Article> select_split(const std::vector<Article>& articles, Split split) {
  std::vector<Article> out;
  for (const auto& a : articles) {
    if (a.split == split) out.push_back(a);
  }
  return out;
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw ConfigError(what + " not found: " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_atomic(path, text);
}

void write_report(const fs::path& stem, const eval::MetricsReport& report) {
  write_text(stem.string() + ".json", report.to_json().dump(2) + "\n");
  write_text(stem.string() + ".tsv", report.to_tsv());
}

// Loss decomposition restricted to the terms the run actually optimizes.
json loss_terms(const json& loss, const TrainConfig& train) {
  const auto& w = train.loss.weights;
  const bool distill = train.mode == Mode::Distill;
  json out = json::object();
  out[train.level == Level::Sentence ? "loss_sent_propa" : "loss_token_propa"] =
      loss.at(train.level == Level::Sentence ? "loss_sent_propa" : "loss_token_propa");
  const std::pair<const char*, double> terms[] = {{"loss_response_local", w.response_local},
                                                  {"loss_response_global", w.response_global},
                                                  {"loss_relation_local", w.relation_local},
                                                  {"loss_relation_global", w.relation_global}};
  for (const auto& [name, weight] : terms) {
    if (distill && weight > 0.0) out[name] = loss.at(name);
  }
  out["total"] = loss.at("total");
  return out;
}

bool needs_cache(const TrainConfig& t) {
  return t.mode == Mode::Concat || (t.mode == Mode::Distill && t.loss.weights.uses_distillation());
}

int cmd_train_teacher(const Common& common, const std::string& kind_name) {
  const RunConfig cfg = resolve(common);
  const TeacherKind kind = parse_teacher_kind(kind_name);
  TeacherTrainingReport report;
  json metrics;
  fs::path out;
  std::optional<Teacher> teacher;
  if (kind == TeacherKind::Relation) {
    if (cfg.paths.relation_corpus.empty()) throw ConfigError("paths.relation_corpus is required");
    require_file(cfg.paths.relation_corpus, "relation corpus");
    const auto pairs = load_relation_corpus(cfg.paths.relation_corpus);
    teacher.emplace(train_relation_teacher(pairs, cfg.encoder, cfg.teacher, &report));
    out = cfg.paths.relation_teacher;
    std::vector<RelationPair> test;
    for (const auto& p : pairs) {
      if (p.split == Split::Test) test.push_back(p);
    }
    if (!test.empty()) {
      std::vector<int> gold;
      for (const auto& p : test) gold.push_back(static_cast<int>(p.relation));
      const auto pred = predict_relations(*teacher, test);
      metrics["test_macro_f1"] = eval::macro_f1(gold, pred, kNumRelations);
    }
  } else {
    if (cfg.paths.role_corpus.empty()) throw ConfigError("paths.role_corpus is required");
    require_file(cfg.paths.role_corpus, "role corpus");
    const auto docs = load_role_corpus(cfg.paths.role_corpus);
    teacher.emplace(train_role_teacher(docs, cfg.encoder, cfg.teacher, &report));
    out = cfg.paths.role_teacher;
    std::vector<int> gold, pred;
    for (const auto& d : docs) {
      if (d.split != Split::Test) continue;
      const auto p = predict_roles(*teacher, d);
      for (std::size_t i = 0; i < d.sentences.size(); ++i) {
        gold.push_back(static_cast<int>(d.sentences[i].role));
        pred.push_back(p[i]);
      }
    }
    if (!gold.empty()) metrics["test_macro_f1"] = eval::macro_f1(gold, pred, kNumRoles);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  teacher->save(out);
  metrics["kind"] = to_string(kind);
  metrics["best_epoch"] = report.best_epoch;
  metrics["selection_macro_f1"] = report.best_macro_f1;
  metrics["selected_on_dev"] = report.selected_on_dev;
  metrics["train_accuracy"] = report.train_accuracy;
  metrics["teacher_hash"] = teacher->hash();
  write_text(out.string() + ".metrics.json", metrics.dump(2) + "\n");
  std::cout << out.string() << "\n" << metrics.dump(2) << "\n";
  return kExitOk;
}

std::pair<Teacher, Teacher> load_teachers(const RunConfig& cfg) {
  require_file(cfg.paths.relation_teacher, "relation teacher checkpoint");
  require_file(cfg.paths.role_teacher, "role teacher checkpoint");
  return {Teacher::load(cfg.paths.relation_teacher), Teacher::load(cfg.paths.role_teacher)};
}

int cmd_cache_teacher(const Common& common, const std::string& articles_dir, const std::string& out) {
  Common c = common;
  if (!articles_dir.empty()) c.overrides.push_back("paths.articles_dir=\"" + articles_dir + "\"");
  if (!out.empty()) c.overrides.push_back("paths.cache_dir=\"" + out + "\"");
  const RunConfig cfg = resolve(c);
  const auto [relation, role] = load_teachers(cfg);
  const auto articles = load_corpus(cfg);
  const auto manifest = cache_teacher_outputs(articles, relation, role, cfg.paths.cache_dir);
  std::cout << "cached " << manifest.records.size() << " articles (" << manifest.computed
            << " computed, " << manifest.reused << " reused) in " << cfg.paths.cache_dir << "\n";
  return kExitOk;
}

int cmd_train_student(const Common& common) {
  const RunConfig cfg = resolve(common);
  const auto articles = load_corpus(cfg);
  const auto train = select_split(articles, Split::Train);
  const auto dev = select_split(articles, Split::Dev);
  const auto test = select_split(articles, Split::Test);

  std::optional<TeacherCache> cache;
  if (needs_cache(cfg.train)) cache = load_teacher_cache(cfg.paths.cache_dir, articles);
  const TeacherCache* cache_ptr = cache ? &*cache : nullptr;

  const fs::path run_dir = cfg.run_dir();
  fs::create_directories(run_dir);
  write_config_snapshot(cfg, run_dir / "config.snapshot");

  StudentModel model(cfg.encoder, cfg.train.mode, cfg.train.level, cfg.train.head_hidden,
                     cfg.train.head_activation, cfg.seed);
  TrainResult result;
  try {
    result = train_student(model, train, dev, cache_ptr, cfg.train);
  } catch (const TrainingDiverged& e) {
    const auto& l = e.last_finite();
    json last = {{"diverged", e.what()},
                 {"last_finite",
                  {{"loss_sent_propa", l.loss_sent_propa},
                   {"loss_token_propa", l.loss_token_propa},
                   {"loss_response_local", l.loss_response_local},
                   {"loss_response_global", l.loss_response_global},
                   {"loss_relation_local", l.loss_relation_local},
                   {"loss_relation_global", l.loss_relation_global},
                   {"total", l.total}}}};
    write_text(run_dir / "diverged.json", last.dump(2) + "\n");
    throw;
  }

  std::string lines;
  for (const auto& record : result.history) {
    json j = record.to_json();
    j["loss"] = loss_terms(j.at("loss"), cfg.train);
    lines += j.dump() + "\n";
  }
  json summary = {{"best_epoch", result.best_epoch},
                  {"best_f1", result.best_f1},
                  {"selected_on", result.selected_on_dev ? "dev" : "train"}};
  if (!dev.empty()) {
    const auto m = evaluate_student(model, dev, cache_ptr, cfg.train.threshold);
    summary["dev"] = m.to_json();
    write_report(run_dir / "dev_metrics", m);
  }
  if (!test.empty() && eval::gold_units(test, cfg.train.level).size() > 0) {
    const auto m = evaluate_student(model, test, cache_ptr, cfg.train.threshold);
    summary["test"] = m.to_json();
    write_report(run_dir / "test_metrics", m);
  }
  lines += summary.dump() + "\n";
  write_text(run_dir / "metrics.jsonl", lines);
  model.save(run_dir / "model.ckpt", {{"run_id", cfg.run_id}, {"train", cfg.train.to_json()}});
  std::cout << run_dir.string() << "\n" << summary.dump(2) << "\n";
  return kExitOk;
}

Split parse_split_name(const std::string& name) { return parse_split(name); }

int cmd_evaluate(const Common& common, std::string checkpoint, const std::string& split_name) {
  const RunConfig cfg = resolve(common);
  if (checkpoint.empty()) checkpoint = (cfg.run_dir() / "model.ckpt").string();
  require_file(checkpoint, "checkpoint");
  const StudentModel model = StudentModel::load(checkpoint);
  const auto articles = select_split(load_corpus(cfg), parse_split_name(split_name));
  if (articles.empty()) throw ValidationError("split '" + split_name + "' has no articles");
  std::optional<TeacherCache> cache;
  if (model.mode() == Mode::Concat) cache = load_teacher_cache(cfg.paths.cache_dir, articles);
  const auto report = evaluate_student(model, articles, cache ? &*cache : nullptr, cfg.train.threshold);
  const fs::path stem = fs::path(checkpoint).parent_path() / ("eval_" + split_name);
  write_report(stem, report);
  std::cout << report.to_tsv();
  return kExitOk;
}

int cmd_analyze(const Common& common, const std::string& split_name, const std::string& axis_name) {
  const RunConfig cfg = resolve(common);
  const auto articles = select_split(load_corpus(cfg), parse_split_name(split_name));
  if (articles.empty()) throw ValidationError("split '" + split_name + "' has no articles");
  const auto cache = load_teacher_cache(cfg.paths.cache_dir, articles);
  std::vector<eval::Axis> axes;
  if (axis_name == "both") {
    axes = {eval::Axis::Relation, eval::Axis::Role};
  } else {
    axes = {eval::parse_axis(axis_name)};
  }
  for (auto axis : axes) {
    const auto table = eval::ratio_analysis(articles, cache, axis);
    const fs::path stem =
        fs::path(cfg.paths.output_dir) / ("analysis_" + eval::to_string(axis) + "_" + split_name);
    write_text(stem.string() + ".tsv", table.to_tsv());
    write_text(stem.string() + ".json", table.to_json().dump(2) + "\n");
    std::cout << table.render() << "\n";
  }
  return kExitOk;
}

int cmd_predict(const Common& common, std::string checkpoint, const std::string& article_path) {
  const RunConfig cfg = resolve(common);
  if (checkpoint.empty()) checkpoint = (cfg.run_dir() / "model.ckpt").string();
  require_file(checkpoint, "checkpoint");
  require_file(article_path, "article");
  const StudentModel model = StudentModel::load(checkpoint);
  const Article article = load_article_file(article_path);
  const auto cached = load_cached_outputs(cfg.paths.cache_dir, article.id);
  if (!cached && model.mode() == Mode::Concat) {
    throw ValidationError("concat model needs teacher outputs for '" + article.id +
                          "'; run `discprop cache-teacher` first");
  }
  const TeacherOutputs* teacher = cached ? &*cached : nullptr;
  const Prediction p = model.predict(article, teacher, cfg.train.threshold);
  const auto sentence_labels = p.sentence_labels();
  const auto token_labels = p.token_labels();
  std::cout << "sentence\tlabel\tprob\trelation\trole";
  if (model.level() == Level::Token) std::cout << "\tpropaganda_tokens";
  std::cout << "\ttext\n";
  for (std::size_t i = 0; i < article.sentences.size(); ++i) {
    std::cout << i << '\t' << (sentence_labels[i] ? "propaganda" : "benign") << '\t'
              << fmt::format("{:.4f}", p.sentence_probs(static_cast<Eigen::Index>(i), 1)) << '\t';
    if (i < p.explanations.size()) {
      std::cout << kRelationNames[static_cast<int>(p.explanations[i].relation)] << '\t'
                << kRoleNames[static_cast<int>(p.explanations[i].role)];
    } else {
      std::cout << "-\t-";
    }
    if (model.level() == Level::Token) {
      std::string words;
      const auto& s = article.sentences[i];
      for (std::size_t t = 0; t < s.tokens.size(); ++t) {
        if (!token_labels[i][t]) continue;
        if (!words.empty()) words += ' ';
        words += article.slice_utf8(s.tokens[t].span);
      }
      std::cout << '\t' << (words.empty() ? "-" : words);
    }
    if (p.truncated[i]) std::cout << "\t[truncated] ";
    else std::cout << '\t';
    std::cout << article.slice_utf8(article.sentences[i].span) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discourse-guided propaganda identification"};
  app.require_subcommand(1);
  Common common;

  auto* teacher = app.add_subcommand("train-teacher", "Train a relation or role teacher");
  std::string kind = "relation";
  teacher->add_option("--kind", kind, "relation | role")->required();
  add_common(teacher, common);

  auto* cache = app.add_subcommand("cache-teacher", "Cache teacher outputs for every article");
  std::string cache_articles, cache_out;
  cache->add_option("--articles", cache_articles, "Overrides paths.articles_dir");
  cache->add_option("--out", cache_out, "Overrides paths.cache_dir");
  add_common(cache, common);

  auto* student = app.add_subcommand("train-student", "Train a propaganda student");
  add_common(student, common);

  std::string checkpoint, split = "test";
  auto* evaluate = app.add_subcommand("evaluate", "Score a student checkpoint on a split");
  evaluate->add_option("--checkpoint", checkpoint, "Defaults to <output_dir>/<run_id>/model.ckpt");
  evaluate->add_option("--split", split, "train | dev | test");
  add_common(evaluate, common);

  std::string analyze_split = "dev", axis = "both";
  auto* analyze = app.add_subcommand("analyze", "Propaganda ratio per teacher relation/role");
  analyze->add_option("--split", analyze_split, "train | dev | test");
  analyze->add_option("--axis", axis, "relation | role | both");
  add_common(analyze, common);

  std::string article_path;
  auto* predict = app.add_subcommand("predict", "Label one article");
  predict->add_option("--checkpoint", checkpoint, "Defaults to <output_dir>/<run_id>/model.ckpt");
  predict->add_option("--article", article_path, "Plain-text article")->required();
  add_common(predict, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }
  spdlog::set_level(common.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*teacher) return cmd_train_teacher(common, kind);
    if (*cache) return cmd_cache_teacher(common, cache_articles, cache_out);
    if (*student) return cmd_train_student(common);
    if (*evaluate) return cmd_evaluate(common, checkpoint, split);
    if (*analyze) return cmd_analyze(common, analyze_split, axis);
    if (*predict) return cmd_predict(common, checkpoint, article_path);
  } catch (const NumericalError& e) {
    spdlog::error("{}", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    // Config, parse, validation and filesystem problems.
    spdlog::error("{}", e.what());
    return kExitInput;
  }
  return kExitOk;
}
