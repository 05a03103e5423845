#include "synthetic.hpp"

#include <cctype>
#include <fstream>

#include <nlohmann/json.hpp>

namespace synth {

using namespace discprop;

namespace {

const std::vector<std::string> kFiller = {
    "the",     "council", "met",    "with",   "local",   "leaders", "in",      "city",
    "hall",    "and",     "their",  "plan",   "for",     "new",     "roads",   "was",
    "shared",  "among",   "people", "from",   "several", "towns",   "near",    "river",
    "office",  "staff",   "budget", "report", "members", "public",  "school",  "market"};

const std::vector<std::vector<std::string>> kRoleCues = {
    {"announced", "declared", "unveiled", "launched", "confirmed", "signed"},
    {"resulting", "consequently", "prompting", "triggering", "causing", "leading"},
    {"previously", "earlier", "formerly", "beforehand", "prior", "preceding"},
    {"currently", "meanwhile", "presently", "ongoing", "nowadays", "today"},
    {"decades", "historically", "centuries", "ancient", "once", "long"},
    {"recalled", "remembered", "anecdote", "story", "neighbor", "childhood"},
    {"shameful", "disgraceful", "outrageous", "corrupt", "treacherous", "wicked"},
    {"will", "expected", "predicted", "forecast", "likely", "soon"}};

const std::vector<std::vector<std::string>> kConnectives = {
    {"however", "but", "although", "whereas"},
    {"because", "therefore", "thus", "so"},
    {"then", "afterwards", "later", "before"},
    {"also", "moreover", "furthermore", "additionally"}};

constexpr int kD3 = 6;

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

const std::vector<std::string>& role_cues(int role) { return kRoleCues.at(static_cast<std::size_t>(role)); }
const std::vector<std::string>& connectives(int relation) {
  return kConnectives.at(static_cast<std::size_t>(relation));
}
std::string World::sentence(int role, int relation, const std::vector<std::string>& d3_words) {
  std::vector<std::string> words;
  const int n = 3 + pick(3);
  for (int i = 0; i < n; ++i) words.push_back(kFiller[static_cast<std::size_t>(pick(static_cast<int>(kFiller.size())))]);
  if (role >= 0) {
    const auto& cues = role == kD3 && !d3_words.empty() ? d3_words : kRoleCues[static_cast<std::size_t>(role)];
    const auto pos = static_cast<std::size_t>(pick(n + 1));
    words.insert(words.begin() + static_cast<long>(pos), cues[static_cast<std::size_t>(pick(static_cast<int>(cues.size())))]);
  }
  if (relation >= 0) {
    const auto& c = kConnectives[static_cast<std::size_t>(relation)];
    words.insert(words.begin(), c[static_cast<std::size_t>(pick(static_cast<int>(c.size())))]);
  }
  std::string out;
  for (const auto& w : words) out += (out.empty() ? capitalize(w) : " " + w);
  return out + ".";
}

std::vector<RelationPair> World::relation_pairs(int per_class, Split split) {
  std::vector<RelationPair> out;
  for (int i = 0; i < per_class; ++i) {
    for (int r = 0; r < kNumRelations; ++r) {
      RelationPair p;
      p.arg1 = sentence(-1, -1, {});
      p.arg2 = sentence(-1, r, {});
      p.relation = static_cast<Relation>(r);
      p.explicitness = Explicitness::Implicit;
      p.split = split;
      out.push_back(p);
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<RoleDocument> World::role_docs(int docs, Split split) {
  std::vector<RoleDocument> out;
  for (int d = 0; d < docs; ++d) {
    RoleDocument doc;
    doc.doc_id = "role" + std::to_string(d);
    doc.split = split;
    // Every role appears in every document, in a shuffled order.
    std::vector<int> roles(kNumRoles);
    for (int r = 0; r < kNumRoles; ++r) roles[static_cast<std::size_t>(r)] = r;
    std::shuffle(roles.begin(), roles.end(), rng);
    for (int r : roles) doc.sentences.push_back({sentence(r, -1, {}), static_cast<Role>(r)});
    out.push_back(std::move(doc));
  }
  return out;
}

World::RawArticle World::raw_article(const std::string& id, int sentences,
                                     const std::vector<std::string>& d3_words, Split split) {
  RawArticle a{id, "", {}, split};
  bool has_d3 = false;
  for (int i = 0; i < sentences; ++i) {
    int role = pick(kNumRoles);
    if (i == sentences - 1 && !has_d3) role = kD3;
    has_d3 = has_d3 || role == kD3;
    const int relation = i > 0 && pick(2) == 0 ? pick(kNumRelations) : -1;
    const std::string s = sentence(role, relation, d3_words);
    if (!a.text.empty()) a.text += ' ';
    const std::size_t start = a.text.size();
    a.text += s;
    if (role == kD3 || (contingency_propaganda && relation == 1)) a.spans.push_back({start, a.text.size()});
  }
  return a;
}

std::vector<Article> World::articles(int count, int max_sentences, const std::vector<std::string>& d3_words,
                                     Split split, const std::string& prefix) {
  std::vector<Article> out;
  for (int i = 0; i < count; ++i) {
    const int n = 4 + pick(max_sentences - 3);
    const auto raw = raw_article(prefix + std::to_string(i), n, d3_words, split);
    Article a = make_article(raw.id, raw.text, split);
    apply_spans(a, raw.spans);
    out.push_back(std::move(a));
  }
  return out;
}

void write_fixture(const std::filesystem::path& dir, std::uint64_t seed) {
  namespace fs = std::filesystem;
  using nlohmann::json;
  World w(seed);
  w.contingency_propaganda = true;
  fs::create_directories(dir / "articles");
  std::ofstream spans(dir / "spans.tsv");
  std::ofstream splits(dir / "splits.tsv");
  auto emit = [&](const std::string& prefix, int count, const std::vector<std::string>& d3, Split split,
                  const char* split_name) {
    for (int i = 0; i < count; ++i) {
      const auto raw = w.raw_article(prefix + std::to_string(i), 4 + w.pick(7), d3, split);
      std::ofstream(dir / "articles" / (raw.id + ".txt")) << raw.text << "\n";
      splits << raw.id << '\t' << split_name << '\n';
      for (const auto& s : raw.spans) spans << raw.id << '\t' << s.start << '\t' << s.end << '\n';
    }
  };
  emit("train", 8, {}, Split::Train, "train");
  emit("dev", 4, {}, Split::Dev, "dev");
  emit("test", 4, {}, Split::Test, "test");

  std::ofstream rel(dir / "relation.jsonl");
  const char* sections[] = {"02", "22", "23"};
  const Split rel_splits[] = {Split::Train, Split::Dev, Split::Test};
  const int per_class[] = {40, 5, 5};
  for (int s = 0; s < 3; ++s) {
    for (const auto& p : w.relation_pairs(per_class[s], rel_splits[s])) {
      rel << json{{"arg1", p.arg1},
                  {"arg2", p.arg2},
                  {"sense", std::string(kRelationNames[static_cast<int>(p.relation)]) + ".Cause"},
                  {"explicitness", "Implicit"},
                  {"section", sections[s]}}
                 .dump()
          << '\n';
    }
  }
  std::ofstream role(dir / "role.jsonl");
  const char* role_split_names[] = {"train", "dev", "test"};
  const int role_docs[] = {40, 5, 5};
  for (int s = 0; s < 3; ++s) {
    for (auto& d : w.role_docs(role_docs[s], rel_splits[s])) {
      json sentences = json::array();
      for (const auto& sent : d.sentences) {
        sentences.push_back({{"text", sent.text}, {"role", std::string(kRoleNames[static_cast<int>(sent.role)])}});
      }
      role << json{{"doc_id", std::string(role_split_names[s]) + "_" + d.doc_id},
                   {"sentences", sentences},
                   {"split", role_split_names[s]}}
                  .dump()
           << '\n';
    }
  }
}

}  // namespace synth
