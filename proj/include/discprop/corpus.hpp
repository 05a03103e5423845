#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace discprop {

// Half-open [start, end) range of Unicode code point offsets into an article.
struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool overlaps(const CharSpan& other) const {
    return start < other.end && other.start < end;
  }
  bool contains(const CharSpan& other) const {
    return start <= other.start && other.end <= end;
  }
  auto operator<=>(const CharSpan&) const = default;
};

enum class Label { Benign = 0, Propaganda = 1 };
enum class Split { Train, Dev, Test };

std::string_view to_string(Label label);
std::string_view to_string(Split split);
Label parse_label(std::string_view text);
Split parse_split(std::string_view text);

struct Token {
  CharSpan span;
  std::optional<Label> gold;
  bool operator==(const Token&) const = default;
};

struct Sentence {
  std::size_t index = 0;
  CharSpan span;
  std::vector<Token> tokens;
  std::optional<Label> gold;
  bool operator==(const Sentence&) const = default;
};

struct Article {
  std::string id;
  std::string text;      // UTF-8 as read from disk
  std::u32string chars;  // decoded text; all spans index into this
  std::vector<Sentence> sentences;
  Split split = Split::Train;

  std::u32string_view slice(CharSpan span) const {
    return std::u32string_view(chars).substr(span.start, span.length());
  }
  std::string slice_utf8(CharSpan span) const;
  std::size_t token_count() const;
  bool labeled() const;
  bool operator==(const Article&) const = default;
};

// Top-level PDTB senses, in the column order used by the analysis tables.
enum class Relation { Comparison = 0, Contingency, Temporal, Expansion };
inline constexpr int kNumRelations = 4;
inline constexpr std::array<std::string_view, kNumRelations> kRelationNames = {
    "Comparison", "Contingency", "Temporal", "Expansion"};

enum class Explicitness { Explicit, Implicit };

// News discourse roles: main content, context-informing, additional content.
enum class Role { M1 = 0, M2, C1, C2, D1, D2, D3, D4 };
inline constexpr int kNumRoles = 8;
inline constexpr std::array<std::string_view, kNumRoles> kRoleNames = {
    "M1", "M2", "C1", "C2", "D1", "D2", "D3", "D4"};

// Maps a PDTB sense string such as "Contingency.Cause.Reason" to its top-level
// class. Throws ValidationError for anything else (EntRel, NoRel, typos).
Relation parse_relation(std::string_view sense);
// Accepts role codes ("D3") and role names ("Evaluation", "main event").
Role parse_role(std::string_view tag);

struct RelationPair {
  std::string arg1;
  std::string arg2;
  Relation relation = Relation::Expansion;
  Explicitness explicitness = Explicitness::Implicit;
  Split split = Split::Train;
  bool operator==(const RelationPair&) const = default;
};

struct RoleSentence {
  std::string text;
  Role role = Role::M1;
  bool operator==(const RoleSentence&) const = default;
};

struct RoleDocument {
  std::string doc_id;
  std::vector<RoleSentence> sentences;
  Split split = Split::Train;
  bool operator==(const RoleDocument&) const = default;
};

// ---------------------------------------------------------------------------
// Segmentation

bool is_space(char32_t c);

// Rule-based sentence segmentation. Newlines always end a sentence; terminal
// punctuation ends one when followed by whitespace, unless the preceding word
// is a known abbreviation or a single-letter initial. Spans are trimmed of
// whitespace and everything outside them is whitespace.
std::vector<CharSpan> sentence_split(std::u32string_view text);

// Words and single punctuation marks inside `within`.
std::vector<CharSpan> tokenize_words(std::u32string_view text, CharSpan within);

// Builds an unlabeled article by segmenting `text`.
Article make_article(std::string id, std::string text, Split split = Split::Train);

// Builds an article whose sentences are given explicitly; sentences are joined
// with a single space and never re-segmented.
Article make_article_from_sentences(std::string id,
                                    std::span<const std::string> sentences,
                                    Split split = Split::Train);

// ---------------------------------------------------------------------------
// Labels

// Sorts and unions overlapping or touching spans.
std::vector<CharSpan> merge_spans(std::vector<CharSpan> spans);

// Token gold = propaganda iff the token overlaps a span; sentence gold =
// propaganda iff any of its tokens is. Overlapping spans are merged first.
void apply_spans(Article& article, std::span<const CharSpan> spans);

// Maximal runs of propaganda tokens, each covering first.start..last.end.
std::vector<CharSpan> spans_from_token_labels(const Article& article);

// ---------------------------------------------------------------------------
// Token/subword alignment

// alignment[token] = indices of the subwords inside that token.
using Alignment = std::vector<std::vector<std::size_t>>;

Alignment align_tokens(const Sentence& sentence,
                       std::span<const CharSpan> subword_spans);

// A token is positive when any of its subwords is positive.
std::vector<bool> aggregate_any_positive(const Alignment& alignment,
                                         std::span<const bool> subword_positive);

// ---------------------------------------------------------------------------
// Loaders

std::map<std::string, Split> read_split_manifest(const std::filesystem::path& path);
std::map<std::string, std::vector<CharSpan>> read_span_file(
    const std::filesystem::path& path);

// Loads every article listed in the manifest from `<articles_dir>/<id>.txt`.
// With a non-empty spans_file, every article gets gold labels (articles with
// no rows are all benign).
std::vector<Article> load_propaganda_corpus(const std::filesystem::path& articles_dir,
                                            const std::filesystem::path& spans_file,
                                            const std::filesystem::path& split_manifest);

// Alternative input: `article_id \t sentence_index \t {propaganda|benign}`.
// Sets sentence gold labels only; token labels are left absent.
void apply_sentence_labels(std::vector<Article>& articles,
                           const std::filesystem::path& path);

// Loads one unlabeled article from a text file; the id is the file stem.
Article load_article_file(const std::filesystem::path& path);

// JSONL `{arg1, arg2, sense, explicitness}`; `sense` may be a list, in which
// case the pair is duplicated once per distinct top-level class. Optional
// `section` (PDTB section number) or `split` assigns the split.
std::vector<RelationPair> load_relation_corpus(const std::filesystem::path& path);

// JSONL `{doc_id, sentences: [{text, role}]}` with optional `split`.
std::vector<RoleDocument> load_role_corpus(const std::filesystem::path& path);

std::array<std::size_t, kNumRelations> relation_histogram(
    std::span<const RelationPair> pairs);
std::array<std::size_t, kNumRoles> role_histogram(std::span<const RoleDocument> docs);

}  // namespace discprop
