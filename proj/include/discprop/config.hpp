#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "discprop/encoder.hpp"
#include "discprop/student.hpp"
#include "discprop/teachers.hpp"

namespace discprop {

struct PathsConfig {
  std::string articles_dir;
  std::string spans_file;
  std::string split_manifest;
  std::string sentence_labels;  // optional TSV alternative to spans
  std::string relation_corpus;
  std::string role_corpus;
  std::string cache_dir = "cache";
  std::string output_dir = "runs";
  std::string relation_teacher = "teachers/relation.ckpt";
  std::string role_teacher = "teachers/role.ckpt";
};

// Resolved run configuration. Sections: paths, encoder, teacher, train, loss,
// plus top-level seed and run_id. The top-level seed drives both teacher and
// student initialisation.
struct RunConfig {
  PathsConfig paths;
  EncoderConfig encoder;
  TeacherConfig teacher;
  TrainConfig train;  // train.loss holds the loss section
  std::uint64_t seed = 13;
  std::string run_id = "run";

  void validate() const;
  nlohmann::json to_json() const;
  // Unknown keys anywhere raise ConfigError.
  static RunConfig from_json(const nlohmann::json& j);

  std::filesystem::path run_dir() const { return std::filesystem::path(paths.output_dir) / run_id; }
};

inline constexpr const char* kEnvPrefix = "DISCPROP_";

// `a.b.c=value` style override. The value is parsed as JSON when possible and
// kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

// DISCPROP_TRAIN__EPOCHS=10 sets train.epochs; `__` separates levels.
void apply_env_overrides(nlohmann::json& j, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> environment_with_prefix(const std::string& prefix = kEnvPrefix);

// File (may be empty path for defaults), then environment, then overrides.
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {},
                          const std::map<std::string, std::string>& env = {});

void write_config_snapshot(const RunConfig& config, const std::filesystem::path& path);

}  // namespace discprop
