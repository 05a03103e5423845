#include "discprop/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "discprop/errors.hpp"
#include "discprop/utf8.hpp"

namespace discprop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::size_t parse_index(const std::string& field, const fs::path& path, std::size_t line_no) {
  const std::string t = trim(field);
  if (t.empty() || !std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw ParseError(path.string() + ":" + std::to_string(line_no) +
                     ": expected a non-negative integer, got '" + field + "'");
  }
  return std::stoull(t);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_word_char(char32_t c) {
  if (c < 0x80) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == U'_';
  }
  if (is_space(c)) return false;
  switch (c) {
    case U'‘': case U'’': case U'“': case U'”': case U'–': case U'—':
    case U'…': case U'«': case U'»':
      return false;
    default:
      return true;
  }
}

bool is_terminator(char32_t c) { return c == U'.' || c == U'!' || c == U'?' || c == U'…'; }

bool is_closer(char32_t c) {
  return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == U'’' || c == U'”' ||
         c == U'»';
}

const std::set<std::u32string>& abbreviations() {
  static const std::set<std::u32string> kAbbrev = {
      U"mr", U"mrs", U"ms", U"dr", U"prof", U"st", U"jr", U"sr", U"vs", U"etc",
      U"e.g", U"i.e", U"gen", U"gov", U"sen", U"rep", U"no", U"inc", U"corp",
      U"ltd", U"co", U"jan", U"feb", U"mar", U"apr", U"jun", U"jul", U"aug",
      U"sep", U"sept", U"oct", U"nov", U"dec", U"u.s", U"u.k", U"a.m", U"p.m"};
  return kAbbrev;
}

// An initial ("J. Smith", "J. R. Tolkien") is followed by a name. "A. B." at the
// end of a text is two sentences.
bool initial_continues(std::u32string_view text, std::size_t from) {
  std::size_t i = from;
  while (i < text.size() && is_space(text[i]) && text[i] != U'\n') ++i;
  std::size_t j = i;
  while (j < text.size() && is_word_char(text[j])) ++j;
  if (j - i >= 2) return true;
  if (j - i == 1 && j < text.size() && text[j] == U'.') {
    std::size_t k = j + 1;
    while (k < text.size() && is_space(text[k]) && text[k] != U'\n') ++k;
    return k < text.size() && is_word_char(text[k]);
  }
  return false;
}

// True when the '.' at `dot` closes an abbreviation or an initial.
bool is_abbreviation(std::u32string_view text, std::size_t dot) {
  std::size_t begin = dot;
  while (begin > 0 && (is_word_char(text[begin - 1]) || text[begin - 1] == U'.')) --begin;
  if (begin == dot) return false;
  std::u32string word(text.substr(begin, dot - begin));
  if (word.size() == 1 && word[0] < 0x80 && std::isupper(static_cast<int>(word[0]))) {
    return initial_continues(text, dot + 1);
  }
  for (auto& c : word) {
    if (c < 0x80) c = static_cast<char32_t>(std::tolower(static_cast<int>(c)));
  }
  return abbreviations().count(word) > 0;
}

void push_trimmed(std::u32string_view text, std::size_t start, std::size_t end,
                  std::vector<CharSpan>& out) {
  while (start < end && is_space(text[start])) ++start;
  while (end > start && is_space(text[end - 1])) --end;
  if (start < end) out.push_back({start, end});
}

Split split_from_record(const json& rec, const std::string& where) {
  if (rec.contains("split")) return parse_split(rec.at("split").get<std::string>());
  if (rec.contains("section")) {
    const int section = rec.at("section").is_string() ? std::stoi(rec.at("section").get<std::string>())
                                                      : rec.at("section").get<int>();
    if (section == 23) return Split::Test;
    if (section == 22 || section == 24) return Split::Dev;
    if (section >= 2 && section <= 21) return Split::Train;
    throw ValidationError(where + ": PDTB section " + std::to_string(section) +
                          " is outside the 2-24 train/dev/test convention");
  }
  return Split::Train;
}

template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      fn(rec, where);
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
}

}  // namespace

std::string_view to_string(Label label) {
  return label == Label::Propaganda ? "propaganda" : "benign";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "train";
}

Label parse_label(std::string_view text) {
  const auto t = lower(trim(text));
  if (t == "propaganda") return Label::Propaganda;
  if (t == "benign") return Label::Benign;
  throw ParseError("unknown label '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  const auto t = lower(trim(text));
  if (t == "train") return Split::Train;
  if (t == "dev" || t == "validation") return Split::Dev;
  if (t == "test") return Split::Test;
  throw ParseError("unknown split '" + std::string(text) + "'");
}

std::string Article::slice_utf8(CharSpan span) const { return utf8::encode(slice(span)); }

std::size_t Article::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.tokens.size();
  return n;
}

bool Article::labeled() const {
  return !sentences.empty() &&
         std::all_of(sentences.begin(), sentences.end(),
                     [](const Sentence& s) { return s.gold.has_value(); });
}

Relation parse_relation(std::string_view sense) {
  std::string head = trim(sense);
  head = head.substr(0, head.find('.'));
  const auto key = lower(head);
  for (int i = 0; i < kNumRelations; ++i) {
    if (key == lower(kRelationNames[i])) return static_cast<Relation>(i);
  }
  throw ValidationError("unknown discourse relation '" + std::string(sense) + "'");
}

Role parse_role(std::string_view tag) {
  std::string key = lower(trim(tag));
  std::replace(key.begin(), key.end(), '_', ' ');
  std::replace(key.begin(), key.end(), '-', ' ');
  static const std::map<std::string, Role> kNames = {
      {"m1", Role::M1}, {"main event", Role::M1}, {"main", Role::M1},
      {"m2", Role::M2}, {"consequence", Role::M2},
      {"c1", Role::C1}, {"previous context", Role::C1}, {"previous event", Role::C1},
      {"c2", Role::C2}, {"current context", Role::C2},
      {"d1", Role::D1}, {"historical event", Role::D1},
      {"d2", Role::D2}, {"anecdotal event", Role::D2},
      {"d3", Role::D3}, {"evaluation", Role::D3},
      {"d4", Role::D4}, {"expectation", Role::D4},
  };
  const auto it = kNames.find(key);
  if (it == kNames.end()) {
    throw ValidationError("unknown discourse role '" + std::string(tag) + "'");
  }
  return it->second;
}

bool is_space(char32_t c) {
  switch (c) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\f': case U'\v':
    case 0x00A0: case 0x1680: case 0x2028: case 0x2029: case 0x202F:
    case 0x205F: case 0x3000: case 0xFEFF:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200B;
  }
}

std::vector<CharSpan> sentence_split(std::u32string_view text) {
  std::vector<CharSpan> out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t c = text[i];
    if (c == U'\n') {
      push_trimmed(text, start, i, out);
      start = ++i;
      continue;
    }
    if (is_terminator(c)) {
      std::size_t j = i;
      while (j < text.size() && is_terminator(text[j])) ++j;
      while (j < text.size() && is_closer(text[j])) ++j;
      const bool at_break = j == text.size() || is_space(text[j]);
      const bool single_dot = j == i + 1 && c == U'.';
      if (at_break && !(single_dot && is_abbreviation(text, i))) {
        push_trimmed(text, start, j, out);
        start = j;
      }
      i = j;
      continue;
    }
    ++i;
  }
  push_trimmed(text, start, text.size(), out);
  return out;
}

std::vector<CharSpan> tokenize_words(std::u32string_view text, CharSpan within) {
  std::vector<CharSpan> out;
  std::size_t i = within.start;
  while (i < within.end) {
    const char32_t c = text[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (!is_word_char(c)) {
      out.push_back({i, i + 1});
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < within.end) {
      if (is_word_char(text[j])) {
        ++j;
      } else if ((text[j] == U'\'' || text[j] == U'’') && j + 1 < within.end &&
                 is_word_char(text[j + 1])) {
        j += 2;
      } else {
        break;
      }
    }
    out.push_back({i, j});
    i = j;
  }
  return out;
}

namespace {

Article build_article(std::string id, std::string text, std::u32string chars,
                      const std::vector<CharSpan>& sentence_spans, Split split) {
  Article article;
  article.id = std::move(id);
  article.text = std::move(text);
  article.chars = std::move(chars);
  article.split = split;
  for (const auto& span : sentence_spans) {
    Sentence s;
    s.index = article.sentences.size();
    s.span = span;
    for (const auto& tok : tokenize_words(article.chars, span)) s.tokens.push_back({tok, {}});
    if (s.tokens.empty()) continue;
    article.sentences.push_back(std::move(s));
  }
  return article;
}

}  // namespace

Article make_article(std::string id, std::string text, Split split) {
  auto chars = utf8::decode(text);
  const auto spans = sentence_split(chars);
  return build_article(std::move(id), std::move(text), std::move(chars), spans, split);
}

Article make_article_from_sentences(std::string id, std::span<const std::string> sentences,
                                    Split split) {
  std::u32string chars;
  std::vector<CharSpan> spans;
  for (const auto& s : sentences) {
    if (!chars.empty()) chars.push_back(U' ');
    const auto decoded = utf8::decode(s);
    const std::size_t base = chars.size();
    chars += decoded;
    std::vector<CharSpan> trimmed;
    push_trimmed(chars, base, chars.size(), trimmed);
    if (trimmed.empty()) {
      throw ValidationError("document '" + id + "' has an empty sentence");
    }
    spans.push_back(trimmed.front());
  }
  auto text = utf8::encode(chars);
  return build_article(std::move(id), std::move(text), std::move(chars), spans, split);
}

std::vector<CharSpan> merge_spans(std::vector<CharSpan> spans) {
  std::sort(spans.begin(), spans.end());
  std::vector<CharSpan> merged;
  for (const auto& s : spans) {
    if (s.start >= s.end) continue;
    if (!merged.empty() && s.start <= merged.back().end) {
      merged.back().end = std::max(merged.back().end, s.end);
    } else {
      merged.push_back(s);
    }
  }
  return merged;
}

void apply_spans(Article& article, std::span<const CharSpan> spans) {
  const auto merged = merge_spans({spans.begin(), spans.end()});
  for (auto& sentence : article.sentences) {
    bool any = false;
    for (auto& token : sentence.tokens) {
      // first merged span ending after the token start
      const auto it = std::upper_bound(
          merged.begin(), merged.end(), token.span.start,
          [](std::size_t pos, const CharSpan& s) { return pos < s.end; });
      const bool hit = it != merged.end() && it->overlaps(token.span);
      token.gold = hit ? Label::Propaganda : Label::Benign;
      any = any || hit;
    }
    sentence.gold = any ? Label::Propaganda : Label::Benign;
  }
}

std::vector<CharSpan> spans_from_token_labels(const Article& article) {
  std::vector<CharSpan> runs;
  bool open = false;
  for (const auto& sentence : article.sentences) {
    for (const auto& token : sentence.tokens) {
      const bool positive = token.gold == Label::Propaganda;
      if (positive && open) {
        runs.back().end = token.span.end;
      } else if (positive) {
        runs.push_back(token.span);
      }
      open = positive;
    }
  }
  return runs;
}

Alignment align_tokens(const Sentence& sentence, std::span<const CharSpan> subword_spans) {
  Alignment alignment(sentence.tokens.size());
  std::size_t t = 0;
  for (std::size_t k = 0; k < subword_spans.size(); ++k) {
    const auto& sub = subword_spans[k];
    if (k > 0 && sub.start < subword_spans[k - 1].end) {
      throw AlignmentError("subword spans are not ordered at index " + std::to_string(k));
    }
    while (t < sentence.tokens.size() && sentence.tokens[t].span.end <= sub.start) ++t;
    if (t == sentence.tokens.size() || !sentence.tokens[t].span.contains(sub)) {
      throw AlignmentError("subword [" + std::to_string(sub.start) + ", " +
                           std::to_string(sub.end) + ") of sentence " +
                           std::to_string(sentence.index) + " lies outside every token");
    }
    alignment[t].push_back(k);
  }
  return alignment;
}

std::vector<bool> aggregate_any_positive(const Alignment& alignment,
                                         std::span<const bool> subword_positive) {
  std::vector<bool> out(alignment.size(), false);
  for (std::size_t t = 0; t < alignment.size(); ++t) {
    for (std::size_t k : alignment[t]) {
      if (k >= subword_positive.size()) {
        throw AlignmentError("subword index " + std::to_string(k) + " has no prediction");
      }
      if (subword_positive[k]) out[t] = true;
    }
  }
  return out;
}

std::map<std::string, Split> read_split_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open split manifest " + path.string());
  std::map<std::string, Split> manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (trim(line).empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected 'article_id<TAB>split'");
    }
    try {
      manifest[trim(fields[0])] = parse_split(fields[1]);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return manifest;
}

std::map<std::string, std::vector<CharSpan>> read_span_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open span file " + path.string());
  std::map<std::string, std::vector<CharSpan>> spans;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (trim(line).empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected 'article_id<TAB>start<TAB>end', got " +
                       std::to_string(fields.size()) + " fields");
    }
    const auto start = parse_index(fields[1], path, line_no);
    const auto end = parse_index(fields[2], path, line_no);
    spans[trim(fields[0])].push_back({start, end});
  }
  return spans;
}

Article load_article_file(const fs::path& path) {
  return make_article(path.stem().string(), read_file(path));
}

std::vector<Article> load_propaganda_corpus(const fs::path& articles_dir,
                                            const fs::path& spans_file,
                                            const fs::path& split_manifest) {
  const auto manifest = read_split_manifest(split_manifest);
  std::vector<Article> articles;
  articles.reserve(manifest.size());
  for (const auto& [id, split] : manifest) {
    const auto path = articles_dir / (id + ".txt");
    if (!fs::exists(path)) {
      throw ValidationError("article '" + id + "' listed in the manifest has no file " +
                            path.string());
    }
    articles.push_back(make_article(id, read_file(path), split));
  }
  if (spans_file.empty()) return articles;

  auto spans = read_span_file(spans_file);
  for (auto& article : articles) {
    const auto it = spans.find(article.id);
    std::vector<CharSpan> mine;
    if (it != spans.end()) {
      for (const auto& s : it->second) {
        if (!(s.start < s.end && s.end <= article.chars.size())) {
          throw ValidationError("span [" + std::to_string(s.start) + ", " +
                                std::to_string(s.end) + ") is out of bounds for article '" +
                                article.id + "' of length " +
                                std::to_string(article.chars.size()));
        }
      }
      mine = std::move(it->second);
      spans.erase(it);
    }
    apply_spans(article, mine);
  }
  if (!spans.empty()) {
    throw ValidationError("span file references unknown article '" + spans.begin()->first + "'");
  }
  return articles;
}

void apply_sentence_labels(std::vector<Article>& articles, const fs::path& path) {
  std::map<std::string, Article*> by_id;
  for (auto& a : articles) by_id[a.id] = &a;
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open sentence label file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (trim(line).empty()) continue;
    const auto fields = split_tabs(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 3) {
      throw ParseError(where + ": expected 'article_id<TAB>sentence_index<TAB>label'");
    }
    const auto it = by_id.find(trim(fields[0]));
    if (it == by_id.end()) {
      throw ValidationError(where + ": unknown article '" + fields[0] + "'");
    }
    const auto index = parse_index(fields[1], path, line_no);
    auto& sentences = it->second->sentences;
    if (index >= sentences.size()) {
      throw ValidationError(where + ": sentence " + std::to_string(index) +
                            " out of range for article '" + it->first + "'");
    }
    try {
      sentences[index].gold = parse_label(fields[2]);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
}

std::vector<RelationPair> load_relation_corpus(const fs::path& path) {
  std::vector<RelationPair> pairs;
  for_each_jsonl(path, [&](const json& rec, const std::string& where) {
    RelationPair base;
    base.arg1 = rec.at("arg1").get<std::string>();
    base.arg2 = rec.at("arg2").get<std::string>();
    base.split = split_from_record(rec, where);
    const auto expl = lower(rec.value("explicitness", std::string("implicit")));
    if (expl == "explicit") {
      base.explicitness = Explicitness::Explicit;
    } else if (expl == "implicit") {
      base.explicitness = Explicitness::Implicit;
    } else {
      throw ValidationError(where + ": unknown explicitness '" + expl + "'");
    }
    std::vector<std::string> senses;
    const auto& sense = rec.at("sense");
    if (sense.is_array()) {
      for (const auto& s : sense) senses.push_back(s.get<std::string>());
    } else {
      senses.push_back(sense.get<std::string>());
    }
    if (senses.empty()) throw ValidationError(where + ": record has no sense");
    std::vector<Relation> seen;
    for (const auto& s : senses) {
      Relation r;
      try {
        r = parse_relation(s);
      } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
      }
      if (std::find(seen.begin(), seen.end(), r) != seen.end()) continue;
      seen.push_back(r);
      RelationPair pair = base;
      pair.relation = r;
      pairs.push_back(std::move(pair));
    }
  });
  return pairs;
}

std::vector<RoleDocument> load_role_corpus(const fs::path& path) {
  std::vector<RoleDocument> docs;
  for_each_jsonl(path, [&](const json& rec, const std::string& where) {
    RoleDocument doc;
    doc.doc_id = rec.at("doc_id").is_string() ? rec.at("doc_id").get<std::string>()
                                              : rec.at("doc_id").dump();
    doc.split = split_from_record(rec, where);
    for (const auto& s : rec.at("sentences")) {
      RoleSentence rs;
      rs.text = s.at("text").get<std::string>();
      try {
        rs.role = parse_role(s.at("role").get<std::string>());
      } catch (const ValidationError& e) {
        throw ValidationError(where + ": document '" + doc.doc_id + "': " + e.what());
      }
      doc.sentences.push_back(std::move(rs));
    }
    docs.push_back(std::move(doc));
  });
  return docs;
}

std::array<std::size_t, kNumRelations> relation_histogram(std::span<const RelationPair> pairs) {
  std::array<std::size_t, kNumRelations> h{};
  for (const auto& p : pairs) ++h[static_cast<int>(p.relation)];
  return h;
}

std::array<std::size_t, kNumRoles> role_histogram(std::span<const RoleDocument> docs) {
  std::array<std::size_t, kNumRoles> h{};
  for (const auto& d : docs) {
    for (const auto& s : d.sentences) ++h[static_cast<int>(s.role)];
  }
  return h;
}

}  // namespace discprop
