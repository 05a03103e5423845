#pragma once

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "discprop/corpus.hpp"
#include "discprop/distill.hpp"
#include "discprop/teachers.hpp"

namespace discprop::eval {

using distill::Level;

// Propaganda is the positive class. 0/0 ratios are defined as 0.
struct MetricsReport {
  Level level = Level::Sentence;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t units() const { return tp + fp + fn + tn; }
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  // Header line plus one data line.
  std::string to_tsv() const;
};

MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn,
                                  Level level);

// A scored unit: a sentence (token = -1) or a word inside a sentence.
struct UnitKey {
  std::string article_id;
  std::size_t sentence = 0;
  long token = -1;
  auto operator<=>(const UnitKey&) const = default;
};
std::string to_string(const UnitKey& key);

using UnitLabels = std::map<UnitKey, bool>;  // true = propaganda

// Throws ValidationError listing (up to 10) units present on one side only.
MetricsReport score(const UnitLabels& predicted, const UnitLabels& gold, Level level);

// Gold units of every labeled sentence (or token) in the articles.
UnitLabels gold_units(std::span<const Article> articles, Level level);

double propaganda_ratio(std::span<const Article> articles, Level level);

// Predicts propaganda for every gold unit.
MetricsReport baseline_all_propaganda(std::span<const Article> articles, Level level);

// Closed form of the all-propaganda predictor at positive ratio r:
// P = r, R = 1, F1 = 2r / (1 + r).
MetricsReport all_propaganda_closed_form(double ratio, Level level);

struct ClassScores {
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

ClassScores per_class_scores(std::span<const int> gold, std::span<const int> predicted,
                             int classes);
double macro_f1(std::span<const int> gold, std::span<const int> predicted, int classes);

enum class Axis { Relation, Role };
std::string to_string(Axis axis);
Axis parse_axis(const std::string& name);

// Counts of propaganda (row 0) and benign (row 1) sentences per teacher class.
struct RatioTable {
  Axis axis = Axis::Relation;
  std::vector<std::string> columns;
  std::array<std::vector<std::size_t>, 2> counts;

  std::size_t column_total(std::size_t col) const { return counts[0][col] + counts[1][col]; }
  std::size_t row_total(int row) const;
  std::size_t grand_total() const { return row_total(0) + row_total(1); }
  // Share of `row` within column `col`; nullopt for an empty column.
  std::optional<double> ratio(int row, std::size_t col) const;
  std::optional<double> total_ratio(int row) const;

  // Aligned text table: "146 (40.56)" cells, "0 (none)" for empty columns.
  std::string render() const;
  std::string to_tsv() const;
  nlohmann::json to_json() const;
  static RatioTable from_json(const nlohmann::json& j);
};

RatioTable ratio_analysis(std::span<const Label> gold, std::span<const int> teacher_class,
                          Axis axis);

// Cross-tabulates gold-labeled sentences against the argmax of their teacher
// distribution (ties resolve to the lowest class index). The relation axis
// skips each article's first sentence.
RatioTable ratio_analysis(std::span<const Article> articles,
                          const std::map<std::string, TeacherOutputs>& outputs, Axis axis);

// "146 (40.56)" / "0 (none)".
std::string format_cell(std::size_t count, std::optional<double> ratio);

}  // namespace discprop::eval
