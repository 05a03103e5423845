#include "discprop/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "discprop/checkpoint.hpp"
#include "discprop/errors.hpp"

extern char** environ;

namespace discprop {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
    }
  }
}

const std::set<std::string> kTopKeys = {"paths", "encoder", "teacher", "train", "loss", "seed", "run_id"};
const std::set<std::string> kPathKeys = {"articles_dir",    "spans_file",   "split_manifest",
                                         "sentence_labels", "relation_corpus", "role_corpus",
                                         "cache_dir",       "output_dir",   "relation_teacher",
                                         "role_teacher"};
const std::set<std::string> kEncoderKeys = {"backbone",   "hidden_dim", "max_input_length",
                                            "sentence_marker", "num_layers", "ffn_dim",
                                            "vocab_size", "max_subword_chars", "attention_window", "sentence_local_attention",
                                            "checkpoint"};
const std::set<std::string> kTeacherKeys = {"epochs", "learning_rate", "weight_decay", "head_hidden",
                                            "head_activation"};
const std::set<std::string> kTrainKeys = {"epochs",      "learning_rate",   "weight_decay",
                                          "grad_accum",  "level",           "mode",
                                          "head_hidden", "head_activation", "threshold",
                                          "ablate_relations", "eval_train"};
const std::set<std::string> kLossKeys = {"weights", "relation_loss_reduction", "epsilon"};
const std::set<std::string> kWeightKeys = {"propaganda", "response_local", "response_global",
                                           "relation_local", "relation_global"};

std::string path_value(const json& j, const char* key, const std::string& fallback) {
  return j.contains(key) ? j.at(key).get<std::string>() : fallback;
}

}  // namespace

void RunConfig::validate() const {
  encoder.validate();
  teacher.validate();
  train.validate();
  if (run_id.empty() || run_id.find('/') != std::string::npos) {
    throw ConfigError("run_id must be a non-empty name without '/'");
  }
}

json RunConfig::to_json() const {
  json t = train.to_json();
  t.erase("seed");
  json te = teacher.to_json();
  te.erase("seed");
  return {{"paths",
           {{"articles_dir", paths.articles_dir},
            {"spans_file", paths.spans_file},
            {"split_manifest", paths.split_manifest},
            {"sentence_labels", paths.sentence_labels},
            {"relation_corpus", paths.relation_corpus},
            {"role_corpus", paths.role_corpus},
            {"cache_dir", paths.cache_dir},
            {"output_dir", paths.output_dir},
            {"relation_teacher", paths.relation_teacher},
            {"role_teacher", paths.role_teacher}}},
          {"encoder", encoder.to_json()},
          {"teacher", te},
          {"train", t},
          {"loss", train.loss.to_json()},
          {"seed", seed},
          {"run_id", run_id}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    check_keys(j, "", kTopKeys);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      check_keys(p, "paths", kPathKeys);
      auto& d = c.paths;
      d.articles_dir = path_value(p, "articles_dir", d.articles_dir);
      d.spans_file = path_value(p, "spans_file", d.spans_file);
      d.split_manifest = path_value(p, "split_manifest", d.split_manifest);
      d.sentence_labels = path_value(p, "sentence_labels", d.sentence_labels);
      d.relation_corpus = path_value(p, "relation_corpus", d.relation_corpus);
      d.role_corpus = path_value(p, "role_corpus", d.role_corpus);
      d.cache_dir = path_value(p, "cache_dir", d.cache_dir);
      d.output_dir = path_value(p, "output_dir", d.output_dir);
      d.relation_teacher = path_value(p, "relation_teacher", d.relation_teacher);
      d.role_teacher = path_value(p, "role_teacher", d.role_teacher);
    }
    if (j.contains("encoder")) {
      check_keys(j.at("encoder"), "encoder", kEncoderKeys);
      c.encoder = EncoderConfig::from_json(j.at("encoder"));
    }
    if (j.contains("teacher")) {
      check_keys(j.at("teacher"), "teacher", kTeacherKeys);
      c.teacher = TeacherConfig::from_json(j.at("teacher"));
    }
    if (j.contains("train")) {
      check_keys(j.at("train"), "train", kTrainKeys);
      c.train = TrainConfig::from_json(j.at("train"));
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      check_keys(l, "loss", kLossKeys);
      if (l.contains("weights")) check_keys(l.at("weights"), "loss.weights", kWeightKeys);
      c.train.loss = LossConfig::from_json(l);
    }
    c.seed = j.value("seed", c.seed);
    c.run_id = j.value("run_id", c.run_id);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.train.seed = c.seed;
  c.teacher.seed = c.seed;
  c.validate();
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
  (*node)[parts.back()] = value;
}

void apply_env_overrides(json& j, const std::map<std::string, std::string>& env) {
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) continue;
    std::string key = name.substr(prefix.size());
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    std::string dotted;
    for (std::size_t i = 0; i < key.size(); ++i) {
      if (key.compare(i, 2, "__") == 0) {
        dotted += '.';
        ++i;
      } else {
        dotted += key[i];
      }
    }
    apply_override(j, dotted + "=" + value);
  }
}

std::map<std::string, std::string> environment_with_prefix(const std::string& prefix) {
  std::map<std::string, std::string> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string entry = *e;
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    out[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                          const std::map<std::string, std::string>& env) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    j = json::parse(in, nullptr, false, /*ignore_comments=*/true);
    if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  }
  apply_env_overrides(j, env);
  for (const auto& o : overrides) apply_override(j, o);
  return RunConfig::from_json(j);
}

void write_config_snapshot(const RunConfig& config, const std::filesystem::path& path) {
  write_atomic(path, config.to_json().dump(2) + "\n");
}

}  // namespace discprop
