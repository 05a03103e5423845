#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "discprop/corpus.hpp"
#include "discprop/encoder.hpp"
#include "discprop/errors.hpp"
#include "oracles.hpp"

using namespace discprop;
namespace fs = std::filesystem;

namespace {

void write(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::vector<CharSpan> split(const std::string& text) {
  return sentence_split(make_article("x", text).chars);
}

}  // namespace

TEST_CASE("sentence_split: trivial cases") {
  CHECK(split("A. B.").size() == 2);
  const auto one = split("no terminal punctuation here");
  REQUIRE(one.size() == 1);
  CHECK(one[0] == CharSpan{0, 28});
  CHECK(split("").empty());
}

TEST_CASE("sentence_split: hand-marked 7 sentence fixture") {
  const std::string text =
      "Dr. Lee spoke first. Prices rose 5.2 percent!  Why? \"It is over.\"\n"
      "A line without a stop\nJ. Smith left at noon. Done...";
  const std::vector<CharSpan> expected = {{0, 20},  {21, 45}, {47, 51},  {52, 65},
                                          {66, 87}, {88, 110}, {111, 118}};
  CHECK(split(text) == expected);
}

TEST_CASE("sentence_split: spans plus whitespace reconstruct the text") {
  std::mt19937_64 rng(9);
  const std::vector<std::string> pieces = {"word", "Mr.", "U.S.", "3.5", "!", "?", ".", " ", "  ",
                                           "\n", "\"", "é", "ß.", "…", "etc."};
  for (int t = 0; t < 300; ++t) {
    std::string text;
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) text += pieces[rng() % pieces.size()];
    const Article a = make_article("x", text);
    const auto spans = sentence_split(a.chars);
    std::size_t cursor = 0;
    for (const auto& s : spans) {
      REQUIRE(s.start >= cursor);
      REQUIRE(s.end > s.start);
      for (std::size_t c = cursor; c < s.start; ++c) REQUIRE(is_space(a.chars[c]));
      cursor = s.end;
    }
    for (std::size_t c = cursor; c < a.chars.size(); ++c) REQUIRE(is_space(a.chars[c]));
    REQUIRE(sentence_split(a.chars) == spans);
  }
}

TEST_CASE("offsets are code points, not bytes") {
  const Article a = make_article("u", "Ça coûte cher. Größe zählt.");
  REQUIRE(a.sentences.size() == 2);
  CHECK(a.sentences[0].span == CharSpan{0, 14});
  CHECK(a.sentences[1].span == CharSpan{15, 27});
  CHECK(a.slice_utf8(a.sentences[1].span) == "Größe zählt.");
}

TEST_CASE("tokenize_words: words and punctuation") {
  const Article a = make_article("t", "They weren't fooled, again.");
  REQUIRE(a.sentences.size() == 1);
  std::vector<std::string> words;
  for (const auto& t : a.sentences[0].tokens) words.push_back(a.slice_utf8(t.span));
  CHECK(words == std::vector<std::string>{"They", "weren't", "fooled", ",", "again", "."});
}

TEST_CASE("apply_spans: containment and empty cases") {
  Article a = make_article("a", "One two three four five six seven eight nine ten.");
  REQUIRE(a.sentences.size() == 1);
  const std::vector<CharSpan> spans = {{10, 25}};
  apply_spans(a, spans);
  CHECK(a.sentences[0].gold == Label::Propaganda);

  Article b = make_article("b", "First one. Second one.");
  apply_spans(b, {});
  for (const auto& s : b.sentences) {
    CHECK(s.gold == Label::Benign);
    for (const auto& t : s.tokens) CHECK(t.gold == Label::Benign);
  }
}

TEST_CASE("apply_spans: overlapping spans equal their union") {
  const std::string text = "aa bb cc dd ee ff gg. hh ii jj kk.";
  Article a = make_article("a", text), b = make_article("b", text);
  const std::vector<CharSpan> two = {{5, 15}, {10, 20}};
  const std::vector<CharSpan> one = {{5, 20}};
  apply_spans(a, two);
  apply_spans(b, one);
  CHECK(a.sentences == b.sentences);
  CHECK(merge_spans(two) == one);
}

TEST_CASE("property: span projection matches a per-character oracle (1000 cases)") {
  std::mt19937_64 rng(77);
  const std::vector<std::string> words = {"alpha", "be", "c", "delta", "e,", "fox.", "go!", "hm"};
  for (int t = 0; t < 1000; ++t) {
    std::string text;
    const int n = 2 + static_cast<int>(rng() % 14);
    for (int i = 0; i < n; ++i) text += (i ? " " : "") + words[rng() % words.size()];
    Article a = make_article("p", text);
    const std::size_t len = a.chars.size();
    std::vector<CharSpan> spans;
    const int k = static_cast<int>(rng() % 4);
    for (int i = 0; i < k; ++i) {
      const std::size_t s = rng() % len;
      const std::size_t e = s + 1 + rng() % (len - s);
      spans.push_back({s, e});
    }
    apply_spans(a, spans);

    std::vector<bool> marked(len, false);
    for (const auto& s : spans) {
      for (std::size_t c = s.start; c < s.end; ++c) marked[c] = true;
    }
    std::set<std::size_t> positive_chars;
    for (const auto& sentence : a.sentences) {
      bool any = false;
      for (const auto& tok : sentence.tokens) {
        bool hit = false;
        for (std::size_t c = tok.span.start; c < tok.span.end; ++c) hit = hit || marked[c];
        REQUIRE(tok.gold == (hit ? Label::Propaganda : Label::Benign));
        any = any || hit;
        if (hit) {
          for (std::size_t c = tok.span.start; c < tok.span.end; ++c) positive_chars.insert(c);
        }
      }
      REQUIRE(sentence.gold == (any ? Label::Propaganda : Label::Benign));
    }

    // Round trip: the re-derived runs cover exactly the positive tokens.
    std::set<std::size_t> run_token_chars;
    for (const auto& run : spans_from_token_labels(a)) {
      for (const auto& sentence : a.sentences) {
        for (const auto& tok : sentence.tokens) {
          if (run.contains(tok.span)) {
            for (std::size_t c = tok.span.start; c < tok.span.end; ++c) run_token_chars.insert(c);
          }
        }
      }
    }
    REQUIRE(run_token_chars == positive_chars);
    // Every gold character inside a token is covered.
    for (std::size_t c = 0; c < len; ++c) {
      if (marked[c] && !is_space(a.chars[c])) REQUIRE(positive_chars.count(c) == 1);
    }
  }
}

TEST_CASE("align_tokens: 12 tokens / 17 subwords against a hand-built table") {
  const Article a =
      make_article("al", "Propaganda outlets kept repeating it, but readers weren't fooled all.");
  REQUIRE(a.sentences.size() == 1);
  const Sentence& s = a.sentences[0];
  REQUIRE(s.tokens.size() == 12);
  const std::vector<CharSpan> subwords = {{0, 6},   {6, 10},  {11, 17}, {17, 18}, {19, 23},
                                          {24, 30}, {30, 33}, {34, 36}, {36, 37}, {38, 41},
                                          {42, 48}, {48, 49}, {50, 56}, {56, 57}, {58, 64},
                                          {65, 68}, {68, 69}};
  CHECK(subword_spans(s, 6) == subwords);
  const Alignment expected = {{0, 1},   {2, 3}, {4},  {5, 6},   {7},  {8},
                              {9},      {10, 11}, {12, 13}, {14}, {15}, {16}};
  CHECK(align_tokens(s, subwords) == expected);
}

TEST_CASE("align_tokens: label propagation, any-positive rule and errors") {
  const Article a = make_article("x", "Hello world");
  const Sentence& s = a.sentences[0];
  const std::vector<CharSpan> subs = {{0, 3}, {3, 5}, {6, 11}};
  const auto al = align_tokens(s, subs);
  CHECK(al[0] == std::vector<std::size_t>{0, 1});

  const Alignment three = {{0, 1, 2}};
  const bool one_positive[] = {false, true, false};
  CHECK(aggregate_any_positive(three, one_positive) == std::vector<bool>{true});
  const bool none[] = {false, false, false};
  CHECK(aggregate_any_positive(three, none) == std::vector<bool>{false});

  const std::vector<CharSpan> straddle = {{4, 7}};
  CHECK_THROWS_AS(align_tokens(s, straddle), AlignmentError);
  const std::vector<CharSpan> in_space = {{5, 6}};
  CHECK_THROWS_AS(align_tokens(s, in_space), AlignmentError);
}

TEST_CASE("load_propaganda_corpus: labels, splits and errors") {
  const auto dir = oracle::temp_dir("corpus_load");
  fs::create_directories(dir / "articles");
  write(dir / "articles/a1.txt", "Clean start. They are traitors! Calm end.");
  write(dir / "articles/a2.txt", "Nothing here.");
  write(dir / "splits.tsv", "a1\ttrain\na2\tdev\n");
  write(dir / "spans.tsv", "a1\t13\t31\n");
  const auto arts = load_propaganda_corpus(dir / "articles", dir / "spans.tsv", dir / "splits.tsv");
  REQUIRE(arts.size() == 2);
  CHECK(arts[0].id == "a1");
  CHECK(arts[1].split == Split::Dev);
  CHECK(arts[0].sentences[0].gold == Label::Benign);
  CHECK(arts[0].sentences[1].gold == Label::Propaganda);
  CHECK(arts[0].sentences[2].gold == Label::Benign);
  CHECK(arts[1].sentences[0].gold == Label::Benign);

  // Deterministic reload.
  CHECK(load_propaganda_corpus(dir / "articles", dir / "spans.tsv", dir / "splits.tsv") == arts);

  write(dir / "bad.tsv", "a1\t13\t31\na1\t13\n");
  try {
    load_propaganda_corpus(dir / "articles", dir / "bad.tsv", dir / "splits.tsv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("bad.tsv:2") != std::string::npos);
  }
  write(dir / "oob.tsv", "a2\t0\t99\n");
  try {
    load_propaganda_corpus(dir / "articles", dir / "oob.tsv", dir / "splits.tsv");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("'a2'") != std::string::npos);
  }
}

TEST_CASE("apply_sentence_labels") {
  const auto dir = oracle::temp_dir("sentence_labels");
  std::vector<Article> arts = {make_article("a", "One. Two. Three.")};
  write(dir / "labels.tsv", "a\t1\tpropaganda\na\t0\tbenign\n");
  apply_sentence_labels(arts, dir / "labels.tsv");
  CHECK(arts[0].sentences[0].gold == Label::Benign);
  CHECK(arts[0].sentences[1].gold == Label::Propaganda);
  CHECK_FALSE(arts[0].sentences[2].gold.has_value());
  write(dir / "bad.tsv", "a\t7\tbenign\n");
  CHECK_THROWS_AS(apply_sentence_labels(arts, dir / "bad.tsv"), ValidationError);
}

TEST_CASE("load_relation_corpus: mapping, duplication and a 20-record histogram") {
  CHECK(parse_relation("Contingency.Cause") == Relation::Contingency);
  CHECK_THROWS_AS(parse_relation("EntRel"), ValidationError);

  const auto dir = oracle::temp_dir("relations");
  // Hand count: Comparison 5, Contingency 6, Temporal 4, Expansion 7 (22 pairs
  // from 20 records; records 3 and 11 carry two senses).
  const std::vector<std::string> senses = {
      "\"Comparison.Contrast\"",
      "\"Contingency.Cause.Reason\"",
      "[\"Comparison.Concession\", \"Expansion.Conjunction\"]",
      "\"Temporal.Asynchronous\"",
      "\"Expansion.Instantiation\"",
      "\"Contingency.Condition\"",
      "\"Expansion.Restatement\"",
      "\"Temporal.Synchrony\"",
      "\"Comparison\"",
      "\"Contingency.Cause.Result\"",
      "[\"Contingency.Cause\", \"Temporal.Asynchronous.Precedence\"]",
      "\"Expansion.Alternative\"",
      "\"Expansion.Conjunction\"",
      "\"Comparison.Contrast\"",
      "\"Contingency.Pragmatic cause\"",
      "\"Temporal.Asynchronous.Succession\"",
      "\"Expansion.List\"",
      "\"Contingency.Cause\"",
      "\"Comparison.Concession\"",
      "\"Expansion\"",
  };
  REQUIRE(senses.size() == 20);
  std::string jsonl;
  for (std::size_t i = 0; i < senses.size(); ++i) {
    jsonl += R"({"arg1": "a", "arg2": "b", "explicitness": ")" +
             std::string(i % 2 ? "Explicit" : "Implicit") + R"(", "sense": )" + senses[i] + "}\n";
  }
  write(dir / "rel.jsonl", jsonl);
  const auto pairs = load_relation_corpus(dir / "rel.jsonl");
  CHECK(pairs.size() == 22);
  const std::array<std::size_t, 4> expected = {5, 6, 4, 7};
  CHECK(relation_histogram(pairs) == expected);
  CHECK(pairs[1].explicitness == Explicitness::Explicit);

  write(dir / "bad.jsonl", "{\"arg1\": \"a\", \"arg2\": \"b\", \"sense\": \"Contingency\"}\n"
                           "{\"arg1\": \"a\", \"arg2\": \"b\", \"sense\": \"NoRel\"}\n");
  try {
    load_relation_corpus(dir / "bad.jsonl");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("bad.jsonl:2") != std::string::npos);
  }
  write(dir / "broken.jsonl", "{\"arg1\": \n");
  CHECK_THROWS_AS(load_relation_corpus(dir / "broken.jsonl"), ParseError);
}

TEST_CASE("load_role_corpus: names, codes and a 5-doc histogram") {
  CHECK(parse_role("Main event") == Role::M1);
  CHECK(parse_role("D3") == Role::D3);
  CHECK(parse_role("Evaluation") == Role::D3);
  CHECK_THROWS_AS(parse_role("Opinion"), ValidationError);

  const auto dir = oracle::temp_dir("roles");
  // Hand count: M1 5, M2 1, C1 2, C2 3, D1 1, D2 2, D3 4, D4 2.
  write(dir / "roles.jsonl",
        R"({"doc_id": "d1", "sentences": [{"text": "a", "role": "M1"}, {"text": "b", "role": "D3"}, {"text": "c", "role": "C2"}]}
{"doc_id": "d2", "sentences": [{"text": "a", "role": "Main event"}, {"text": "b", "role": "Consequence"}, {"text": "c", "role": "D3"}, {"text": "d", "role": "D4"}]}
{"doc_id": "d3", "sentences": [{"text": "a", "role": "M1"}, {"text": "b", "role": "C1"}, {"text": "c", "role": "Previous Context"}, {"text": "d", "role": "D2"}]}
{"doc_id": "d4", "sentences": [{"text": "a", "role": "M1"}, {"text": "b", "role": "Evaluation"}, {"text": "c", "role": "C2"}, {"text": "d", "role": "D1"}, {"text": "e", "role": "Expectation"}]}
{"doc_id": "d5", "sentences": [{"text": "a", "role": "M1"}, {"text": "b", "role": "D3"}, {"text": "c", "role": "Current Context"}, {"text": "d", "role": "Anecdotal Event"}]}
)");
  const auto docs = load_role_corpus(dir / "roles.jsonl");
  REQUIRE(docs.size() == 5);
  const std::array<std::size_t, 8> expected = {5, 1, 2, 3, 1, 2, 4, 2};
  CHECK(role_histogram(docs) == expected);
  CHECK(load_role_corpus(dir / "roles.jsonl") == docs);

  write(dir / "bad.jsonl", R"({"doc_id": "x", "sentences": [{"text": "a", "role": "Gossip"}]})");
  CHECK_THROWS_AS(load_role_corpus(dir / "bad.jsonl"), ValidationError);
}
