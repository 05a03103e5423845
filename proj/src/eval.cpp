#include "discprop/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "discprop/errors.hpp"

namespace discprop::eval {

namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_of(double p, double r) { return safe_div(2.0 * p * r, p + r); }

int argmax_row(const Matrix& m, Eigen::Index row) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c) {
    if (m(row, c) > m(row, best)) best = c;
  }
  return static_cast<int>(best);
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  return {{"level", distill::to_string(level)},
          {"precision", precision},
          {"recall", recall},
          {"f1", f1},
          {"tp", tp},
          {"fp", fp},
          {"fn", fn},
          {"tn", tn}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport m;
  m.level = distill::parse_level(j.at("level").get<std::string>());
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.f1 = j.at("f1").get<double>();
  m.tp = j.at("tp").get<std::size_t>();
  m.fp = j.at("fp").get<std::size_t>();
  m.fn = j.at("fn").get<std::size_t>();
  m.tn = j.at("tn").get<std::size_t>();
  return m;
}

std::string MetricsReport::to_tsv() const {
  std::ostringstream out;
  out.precision(17);
  out << "level\tprecision\trecall\tf1\ttp\tfp\tfn\ttn\n"
      << distill::to_string(level) << '\t' << precision << '\t' << recall << '\t' << f1 << '\t'
      << tp << '\t' << fp << '\t' << fn << '\t' << tn << '\n';
  return out.str();
}

MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn,
                                  Level level) {
  MetricsReport m;
  m.level = level;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  m.precision = safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
  m.recall = safe_div(static_cast<double>(tp), static_cast<double>(tp + fn));
  m.f1 = f1_of(m.precision, m.recall);
  return m;
}

std::string to_string(const UnitKey& key) {
  std::string s = key.article_id + "/" + std::to_string(key.sentence);
  if (key.token >= 0) s += "/" + std::to_string(key.token);
  return s;
}

MetricsReport score(const UnitLabels& predicted, const UnitLabels& gold, Level level) {
  std::vector<std::string> missing_gold;
  std::vector<std::string> missing_pred;
  for (const auto& [key, _] : predicted) {
    if (!gold.count(key)) missing_gold.push_back(to_string(key));
  }
  for (const auto& [key, _] : gold) {
    if (!predicted.count(key)) missing_pred.push_back(to_string(key));
  }
  const auto describe = [](const std::vector<std::string>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size() && i < 10; ++i) s += (i ? ", " : "") + ids[i];
    if (ids.size() > 10) s += ", ... (" + std::to_string(ids.size()) + " total)";
    return s;
  };
  if (!missing_gold.empty()) {
    throw ValidationError("no gold label for predicted units: " + describe(missing_gold));
  }
  if (!missing_pred.empty()) {
    throw ValidationError("no prediction for gold units: " + describe(missing_pred));
  }
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& [key, g] : gold) {
    const bool p = predicted.at(key);
    if (p && g) ++tp;
    else if (p) ++fp;
    else if (g) ++fn;
    else ++tn;
  }
  return metrics_from_counts(tp, fp, fn, tn, level);
}

UnitLabels gold_units(std::span<const Article> articles, Level level) {
  UnitLabels gold;
  for (const auto& a : articles) {
    for (const auto& s : a.sentences) {
      if (level == Level::Sentence) {
        if (s.gold) gold[{a.id, s.index, -1}] = *s.gold == Label::Propaganda;
        continue;
      }
      for (std::size_t t = 0; t < s.tokens.size(); ++t) {
        if (s.tokens[t].gold) {
          gold[{a.id, s.index, static_cast<long>(t)}] = *s.tokens[t].gold == Label::Propaganda;
        }
      }
    }
  }
  return gold;
}

double propaganda_ratio(std::span<const Article> articles, Level level) {
  const auto gold = gold_units(articles, level);
  std::size_t pos = 0;
  for (const auto& [_, g] : gold) pos += g ? 1 : 0;
  return safe_div(static_cast<double>(pos), static_cast<double>(gold.size()));
}

MetricsReport baseline_all_propaganda(std::span<const Article> articles, Level level) {
  const auto gold = gold_units(articles, level);
  UnitLabels predicted;
  for (const auto& [key, _] : gold) predicted[key] = true;
  return score(predicted, gold, level);
}

MetricsReport all_propaganda_closed_form(double ratio, Level level) {
  MetricsReport m;
  m.level = level;
  m.precision = ratio;
  m.recall = ratio > 0.0 ? 1.0 : 0.0;
  m.f1 = f1_of(m.precision, m.recall);
  return m;
}

ClassScores per_class_scores(std::span<const int> gold, std::span<const int> predicted,
                             int classes) {
  if (gold.size() != predicted.size()) {
    throw ValidationError("per_class_scores: gold and predicted lengths differ");
  }
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == predicted[i]) {
      ++tp[gold[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[gold[i]];
    }
  }
  ClassScores s;
  for (int c = 0; c < classes; ++c) {
    const double p = safe_div(static_cast<double>(tp[c]), static_cast<double>(tp[c] + fp[c]));
    const double r = safe_div(static_cast<double>(tp[c]), static_cast<double>(tp[c] + fn[c]));
    s.precision.push_back(p);
    s.recall.push_back(r);
    s.f1.push_back(f1_of(p, r));
    s.macro_precision += p / classes;
    s.macro_recall += r / classes;
    s.macro_f1 += s.f1.back() / classes;
  }
  return s;
}

double macro_f1(std::span<const int> gold, std::span<const int> predicted, int classes) {
  return per_class_scores(gold, predicted, classes).macro_f1;
}

std::string to_string(Axis axis) { return axis == Axis::Relation ? "relation" : "role"; }

Axis parse_axis(const std::string& name) {
  if (name == "relation") return Axis::Relation;
  if (name == "role") return Axis::Role;
  throw ConfigError("axis must be 'relation' or 'role', got '" + name + "'");
}

std::size_t RatioTable::row_total(int row) const {
  std::size_t n = 0;
  for (auto c : counts[row]) n += c;
  return n;
}

std::optional<double> RatioTable::ratio(int row, std::size_t col) const {
  const auto total = column_total(col);
  if (total == 0) return std::nullopt;
  return static_cast<double>(counts[row][col]) / static_cast<double>(total);
}

std::optional<double> RatioTable::total_ratio(int row) const {
  const auto total = grand_total();
  if (total == 0) return std::nullopt;
  return static_cast<double>(row_total(row)) / static_cast<double>(total);
}

std::string format_cell(std::size_t count, std::optional<double> ratio) {
  if (!ratio) return std::to_string(count) + " (none)";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *ratio * 100.0);
  return std::to_string(count) + " (" + buf + ")";
}

std::string RatioTable::render() const {
  static const char* kRows[2] = {"propaganda", "benign"};
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = {""};
  for (const auto& c : columns) header.push_back(c);
  header.push_back("Total");
  grid.push_back(header);
  for (int r = 0; r < 2; ++r) {
    std::vector<std::string> line = {kRows[r]};
    for (std::size_t c = 0; c < columns.size(); ++c) line.push_back(format_cell(counts[r][c], ratio(r, c)));
    line.push_back(format_cell(row_total(r), total_ratio(r)));
    grid.push_back(line);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) out << " | ";
      out << line[c] << std::string(width[c] - line[c].size(), ' ');
    }
    out << '\n';
  }
  return out.str();
}

std::string RatioTable::to_tsv() const {
  static const char* kRows[2] = {"propaganda", "benign"};
  std::ostringstream out;
  out << "label";
  for (const auto& c : columns) out << '\t' << c;
  out << "\tTotal\n";
  for (int r = 0; r < 2; ++r) {
    out << kRows[r];
    for (std::size_t c = 0; c < columns.size(); ++c) out << '\t' << format_cell(counts[r][c], ratio(r, c));
    out << '\t' << format_cell(row_total(r), total_ratio(r)) << '\n';
  }
  return out.str();
}

nlohmann::json RatioTable::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (std::size_t c = 0; c < columns.size(); ++c) {
    nlohmann::json col = {{"name", columns[c]},
                          {"propaganda", counts[0][c]},
                          {"benign", counts[1][c]}};
    const auto r0 = ratio(0, c);
    const auto r1 = ratio(1, c);
    col["propaganda_ratio"] = r0 ? nlohmann::json(*r0) : nlohmann::json("none");
    col["benign_ratio"] = r1 ? nlohmann::json(*r1) : nlohmann::json("none");
    cols.push_back(col);
  }
  return {{"axis", to_string(axis)},
          {"columns", cols},
          {"total", {{"propaganda", row_total(0)}, {"benign", row_total(1)}}}};
}

RatioTable RatioTable::from_json(const nlohmann::json& j) {
  RatioTable t;
  t.axis = parse_axis(j.at("axis").get<std::string>());
  for (const auto& col : j.at("columns")) {
    t.columns.push_back(col.at("name").get<std::string>());
    t.counts[0].push_back(col.at("propaganda").get<std::size_t>());
    t.counts[1].push_back(col.at("benign").get<std::size_t>());
  }
  return t;
}

RatioTable ratio_analysis(std::span<const Label> gold, std::span<const int> teacher_class,
                          Axis axis) {
  if (gold.size() != teacher_class.size()) {
    throw ValidationError("ratio_analysis: label and class sequences differ in length");
  }
  RatioTable t;
  t.axis = axis;
  const int k = axis == Axis::Relation ? kNumRelations : kNumRoles;
  for (int c = 0; c < k; ++c) {
    t.columns.emplace_back(axis == Axis::Relation ? kRelationNames[c] : kRoleNames[c]);
  }
  t.counts[0].assign(k, 0);
  t.counts[1].assign(k, 0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const int c = teacher_class[i];
    if (c < 0 || c >= k) throw ValidationError("ratio_analysis: class index out of range");
    ++t.counts[gold[i] == Label::Propaganda ? 0 : 1][c];
  }
  return t;
}

RatioTable ratio_analysis(std::span<const Article> articles,
                          const std::map<std::string, TeacherOutputs>& outputs, Axis axis) {
  std::vector<Label> gold;
  std::vector<int> cls;
  for (const auto& a : articles) {
    const auto it = outputs.find(a.id);
    if (it == outputs.end()) {
      throw ValidationError("no teacher outputs for article '" + a.id +
                            "'; run cache-teacher first");
    }
    const Matrix& p = axis == Axis::Relation ? it->second.p_local : it->second.p_global;
    if (static_cast<std::size_t>(p.rows()) < a.sentences.size()) {
      throw ValidationError("teacher outputs for article '" + a.id + "' cover " +
                            std::to_string(p.rows()) + " of " +
                            std::to_string(a.sentences.size()) + " sentences");
    }
    for (const auto& s : a.sentences) {
      // The first sentence has no preceding sentence to relate to.
      if (!s.gold || (axis == Axis::Relation && s.index == 0)) continue;
      gold.push_back(*s.gold);
      cls.push_back(argmax_row(p, static_cast<Eigen::Index>(s.index)));
    }
  }
  return ratio_analysis(gold, cls, axis);
}

}  // namespace discprop::eval
