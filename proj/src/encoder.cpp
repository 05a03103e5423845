#include "discprop/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "discprop/checkpoint.hpp"
#include "discprop/errors.hpp"
#include "discprop/utf8.hpp"

namespace discprop {

std::string to_string(Backbone backbone) {
  return backbone == Backbone::ToyRandom ? "toy_random" : "pretrained_longdoc";
}

Backbone parse_backbone(const std::string& name) {
  if (name == "toy_random") return Backbone::ToyRandom;
  if (name == "pretrained_longdoc") return Backbone::PretrainedLongdoc;
  throw ConfigError("encoder.backbone must be 'toy_random' or 'pretrained_longdoc', got '" +
                    name + "'");
}

void EncoderConfig::validate() const {
  if (hidden_dim <= 0) throw ConfigError("encoder.hidden_dim must be positive");
  if (max_input_length <= 0) throw ConfigError("encoder.max_input_length must be positive");
  if (num_layers < 0) throw ConfigError("encoder.num_layers must be >= 0");
  if (vocab_size < 2) throw ConfigError("encoder.vocab_size must be >= 2");
  if (max_subword_chars <= 0) throw ConfigError("encoder.max_subword_chars must be positive");
  if (attention_window < 0) throw ConfigError("encoder.attention_window must be >= 0");
  if (ffn_dim < 0) throw ConfigError("encoder.ffn_dim must be >= 0");
  if (sentence_marker.empty()) throw ConfigError("encoder.sentence_marker must be non-empty");
  if (backbone == Backbone::PretrainedLongdoc && checkpoint.empty()) {
    throw ConfigError("encoder.backbone = pretrained_longdoc requires encoder.checkpoint");
  }
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"backbone", to_string(backbone)},
          {"hidden_dim", hidden_dim},
          {"max_input_length", max_input_length},
          {"sentence_marker", sentence_marker},
          {"num_layers", num_layers},
          {"ffn_dim", ffn_dim},
          {"vocab_size", vocab_size},
          {"max_subword_chars", max_subword_chars},
          {"attention_window", attention_window},
          {"sentence_local_attention", sentence_local_attention},
          {"checkpoint", checkpoint}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.backbone = parse_backbone(j.value("backbone", to_string(c.backbone)));
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.max_input_length = j.value("max_input_length", c.max_input_length);
  c.sentence_marker = j.value("sentence_marker", c.sentence_marker);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_subword_chars = j.value("max_subword_chars", c.max_subword_chars);
  c.attention_window = j.value("attention_window", c.attention_window);
  c.sentence_local_attention = j.value("sentence_local_attention", c.sentence_local_attention);
  c.checkpoint = j.value("checkpoint", c.checkpoint);
  return c;
}

namespace {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fold_case(std::u32string_view piece) {
  std::u32string folded(piece);
  for (auto& c : folded) {
    if (c < 0x80) c = static_cast<char32_t>(std::tolower(static_cast<int>(c)));
  }
  return utf8::encode(folded);
}

// Id 0 is the sentence start marker; pieces hash into [1, vocab).
long piece_id(std::u32string_view piece, bool continuation, int vocab_size) {
  const std::uint64_t h = fnv1a(fold_case(piece), continuation ? 0x9e3779b97f4a7c15ULL
                                                              : 1469598103934665603ULL);
  return 1 + static_cast<long>(h % static_cast<std::uint64_t>(vocab_size - 1));
}

Matrix sinusoidal_positions(Eigen::Index length, Eigen::Index d) {
  Matrix pos(length, d);
  for (Eigen::Index p = 0; p < length; ++p) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (k / 2)) / d);
      pos(p, k) = (k % 2 == 0) ? std::sin(p * rate) : std::cos(p * rate);
    }
  }
  return pos;
}

}  // namespace

std::vector<CharSpan> subword_spans(const Sentence& sentence, int max_chars) {
  std::vector<CharSpan> out;
  const auto step = static_cast<std::size_t>(max_chars);
  for (const auto& token : sentence.tokens) {
    for (std::size_t s = token.span.start; s < token.span.end; s += step) {
      out.push_back({s, std::min(token.span.end, s + step)});
    }
  }
  return out;
}

DocumentLayout build_layout(const Article& article, const EncoderConfig& config) {
  DocumentLayout layout;
  layout.total_sentences = article.sentences.size();
  const auto budget = static_cast<std::size_t>(config.max_input_length);
  bool full = false;
  for (const auto& sentence : article.sentences) {
    const auto subs = subword_spans(sentence, config.max_subword_chars);
    const Alignment alignment = align_tokens(sentence, subs);
    layout.required_length += 1 + subs.size();
    if (full) continue;
    if (layout.ids.size() + 1 > budget) {
      full = true;
      continue;
    }
    SentenceLayout sl;
    sl.sentence_index = sentence.index;
    sl.marker_position = static_cast<long>(layout.ids.size());
    layout.ids.push_back(0);
    for (const auto& token_subs : alignment) {
      if (layout.ids.size() + token_subs.size() > budget) {
        full = true;
        break;
      }
      std::vector<std::size_t> local;
      for (std::size_t k : token_subs) {
        const auto& span = subs[k];
        const bool continuation = k > 0 && subs[k - 1].end == span.start;
        local.push_back(sl.subword_positions.size());
        sl.subword_positions.push_back(static_cast<long>(layout.ids.size()));
        layout.ids.push_back(piece_id(article.slice(span), continuation, config.vocab_size));
      }
      sl.alignment.push_back(std::move(local));
    }
    layout.sentences.push_back(std::move(sl));
  }
  layout.truncated = layout.required_length > budget;
  return layout;
}

Encoder::Encoder(const EncoderConfig& config, nn::ParameterStore& store, nn::Rng& rng,
                 const std::string& prefix)
    : config_(config) {
  config_.validate();
  if (config_.backbone == Backbone::ToyRandom && (config_.hidden_dim > 32 || config_.num_layers > 2)) {
    spdlog::warn("toy_random backbone configured beyond desk scale (d={}, layers={})",
                 config_.hidden_dim, config_.num_layers);
  }
  const Eigen::Index d = config_.hidden_dim;
  embedding_ = &store.add(prefix + ".embedding", rng.normal(config_.vocab_size, d, 1.0), false);
  emb_gamma_ = &store.add(prefix + ".embedding_ln.gamma", Matrix::Ones(1, d), false);
  emb_beta_ = &store.add(prefix + ".embedding_ln.beta", Matrix::Zero(1, d), false);
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    Block b;
    b.query = nn::Linear(store, p + ".attn.query", d, d, rng);
    b.key = nn::Linear(store, p + ".attn.key", d, d, rng);
    b.value = nn::Linear(store, p + ".attn.value", d, d, rng);
    b.output = nn::Linear(store, p + ".attn.output", d, d, rng);
    b.ln1_gamma = &store.add(p + ".ln1.gamma", Matrix::Ones(1, d), false);
    b.ln1_beta = &store.add(p + ".ln1.beta", Matrix::Zero(1, d), false);
    b.ffn_in = nn::Linear(store, p + ".ffn.in", d, config_.ffn_width(), rng);
    b.ffn_out = nn::Linear(store, p + ".ffn.out", config_.ffn_width(), d, rng);
    b.ln2_gamma = &store.add(p + ".ln2.gamma", Matrix::Ones(1, d), false);
    b.ln2_beta = &store.add(p + ".ln2.beta", Matrix::Zero(1, d), false);
    blocks_.push_back(b);
  }
}

EncodedGraph Encoder::forward(ag::Tape& tape, const DocumentLayout& layout) const {
  const Eigen::Index d = config_.hidden_dim;
  const auto length = static_cast<Eigen::Index>(layout.ids.size());
  if (length == 0) {
    Matrix empty(0, d);
    ag::Var e = tape.constant(empty);
    return {e, e};
  }
  ag::Var x = ag::gather_rows(tape.parameter(*embedding_), layout.ids);
  x = ag::add(x, tape.constant(sinusoidal_positions(length, d)));
  x = ag::layer_norm(x, tape.parameter(*emb_gamma_), tape.parameter(*emb_beta_));
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(d));
  ag::AttentionMask mask;
  mask.window = config_.attention_window;
  if (config_.sentence_local_attention) {
    mask.segments.assign(layout.ids.size(), -1);
    for (std::size_t s = 0; s < layout.sentences.size(); ++s) {
      const auto& sl = layout.sentences[s];
      mask.segments[static_cast<std::size_t>(sl.marker_position)] = static_cast<long>(s);
      for (long p : sl.subword_positions) mask.segments[static_cast<std::size_t>(p)] = static_cast<long>(s);
    }
  }
  for (const auto& b : blocks_) {
    ag::Var ctx = ag::attention(b.query(tape, x), b.key(tape, x), b.value(tape, x), attn_scale, mask);
    x = ag::layer_norm(ag::add(x, b.output(tape, ctx)), tape.parameter(*b.ln1_gamma),
                       tape.parameter(*b.ln1_beta));
    ag::Var ff = b.ffn_out(tape, ag::gelu(b.ffn_in(tape, x)));
    x = ag::layer_norm(ag::add(x, ff), tape.parameter(*b.ln2_gamma), tape.parameter(*b.ln2_beta));
  }
  std::vector<long> markers;
  for (const auto& s : layout.sentences) markers.push_back(s.marker_position);
  return {x, ag::gather_rows(x, markers)};
}

DocumentEncoding Encoder::encode(const Article& article) const {
  return encode(layout(article));
}

DocumentEncoding Encoder::encode(const DocumentLayout& layout) const {
  if (layout.truncated) {
    spdlog::warn("input of {} positions exceeds max_input_length {}; kept {} of {} sentences",
                 layout.required_length, config_.max_input_length, layout.sentences.size(),
                 layout.total_sentences);
  }
  ag::Tape tape(false);
  const EncodedGraph g = forward(tape, layout);
  DocumentEncoding enc;
  enc.truncated = layout.truncated;
  enc.sentence_embeddings = g.sentences.value();
  const Matrix& hidden = g.hidden.value();
  for (const auto& s : layout.sentences) {
    Matrix subs(static_cast<Eigen::Index>(s.subword_positions.size()), hidden.cols());
    for (std::size_t k = 0; k < s.subword_positions.size(); ++k) {
      subs.row(static_cast<Eigen::Index>(k)) = hidden.row(s.subword_positions[k]);
    }
    Matrix tokens(static_cast<Eigen::Index>(s.alignment.size()), hidden.cols());
    for (std::size_t t = 0; t < s.alignment.size(); ++t) {
      RowVector acc = RowVector::Zero(hidden.cols());
      for (std::size_t k : s.alignment[t]) acc += subs.row(static_cast<Eigen::Index>(k));
      tokens.row(static_cast<Eigen::Index>(t)) = acc / static_cast<double>(s.alignment[t].size());
    }
    enc.subword_embeddings.push_back(std::move(subs));
    enc.token_embeddings.push_back(std::move(tokens));
  }
  return enc;
}

void load_pretrained_encoder(const EncoderConfig& config, nn::ParameterStore& store) {
  if (config.backbone != Backbone::PretrainedLongdoc) return;
  const auto ckpt = read_checkpoint(config.checkpoint);
  load_parameters(store, ckpt.tensors, /*require_all=*/false);
}

RowVector pair_embedding(const DocumentEncoding& encoding, std::size_t i) {
  const auto n = encoding.sentence_count();
  if (i >= n) {
    throw std::out_of_range("pair_embedding: sentence " + std::to_string(i) + " of " +
                            std::to_string(n));
  }
  const Eigen::Index d = encoding.sentence_embeddings.cols();
  RowVector out = RowVector::Zero(2 * d);
  if (i > 0) out.head(d) = encoding.sentence_embeddings.row(static_cast<Eigen::Index>(i) - 1);
  out.tail(d) = encoding.sentence_embeddings.row(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace discprop
