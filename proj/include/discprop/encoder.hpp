#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "discprop/corpus.hpp"
#include "discprop/nn.hpp"

namespace discprop {

enum class Backbone { PretrainedLongdoc, ToyRandom };
std::string to_string(Backbone backbone);
Backbone parse_backbone(const std::string& name);

struct EncoderConfig {
  Backbone backbone = Backbone::ToyRandom;
  int hidden_dim = 16;
  int max_input_length = 4096;
  std::string sentence_marker = "<s>";
  int num_layers = 1;
  int ffn_dim = 0;  // 0 means 2 * hidden_dim
  int vocab_size = 4096;
  int max_subword_chars = 6;
  // Sliding-window attention: positions further apart than this do not
  // attend to each other. 0 means full attention.
  int attention_window = 256;
  // Restrict attention to positions of the same sentence.
  bool sentence_local_attention = false;
  // Weights for the pretrained backbone, in the repository checkpoint format.
  std::string checkpoint;

  void validate() const;
  int ffn_width() const { return ffn_dim > 0 ? ffn_dim : 2 * hidden_dim; }
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

// Sentence `sentence_index` of the article as laid out in the input sequence.
struct SentenceLayout {
  std::size_t sentence_index = 0;
  long marker_position = 0;
  std::vector<long> subword_positions;  // surviving subwords, sequence order
  Alignment alignment;                  // surviving tokens -> local subword indices
};

struct DocumentLayout {
  std::vector<long> ids;
  std::vector<SentenceLayout> sentences;  // surviving sentences, article order
  std::size_t total_sentences = 0;
  std::size_t required_length = 0;  // sequence length before truncation
  bool truncated = false;

  std::size_t surviving_tokens(std::size_t s) const { return sentences[s].alignment.size(); }
};

// Subword pieces of one word: chunks of at most `max_chars` code points.
std::vector<CharSpan> subword_spans(const Sentence& sentence, int max_chars);

// Sequence layout: each sentence contributes its start marker followed by its
// subwords. Tail truncation keeps whole tokens only; a sentence whose marker
// does not fit is dropped with everything after it.
DocumentLayout build_layout(const Article& article, const EncoderConfig& config);

struct DocumentEncoding {
  Matrix sentence_embeddings;               // surviving sentences x d
  std::vector<Matrix> token_embeddings;     // per sentence: surviving tokens x d (subword mean)
  std::vector<Matrix> subword_embeddings;   // per sentence: surviving subwords x d
  bool truncated = false;

  std::size_t sentence_count() const {
    return static_cast<std::size_t>(sentence_embeddings.rows());
  }
};

// Graph view used during training.
struct EncodedGraph {
  ag::Var hidden;     // sequence length x d
  ag::Var sentences;  // surviving sentences x d, rows at the start markers
};

// Post-LN transformer over hashed subword ids with sinusoidal positions and
// single-head attention. Parameters are registered in the caller's store
// under `prefix`.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, nn::ParameterStore& store, nn::Rng& rng,
          const std::string& prefix = "encoder");

  const EncoderConfig& config() const { return config_; }
  int hidden_dim() const { return config_.hidden_dim; }

  DocumentLayout layout(const Article& article) const { return build_layout(article, config_); }
  EncodedGraph forward(ag::Tape& tape, const DocumentLayout& layout) const;
  DocumentEncoding encode(const Article& article) const;
  DocumentEncoding encode(const DocumentLayout& layout) const;

 private:
  struct Block {
    nn::Linear query, key, value, output;
    ag::Parameter* ln1_gamma = nullptr;
    ag::Parameter* ln1_beta = nullptr;
    nn::Linear ffn_in, ffn_out;
    ag::Parameter* ln2_gamma = nullptr;
    ag::Parameter* ln2_beta = nullptr;
  };

  EncoderConfig config_;
  ag::Parameter* embedding_ = nullptr;
  ag::Parameter* emb_gamma_ = nullptr;
  ag::Parameter* emb_beta_ = nullptr;
  std::vector<Block> blocks_;
};

// The pretrained backbone loads its weights from config.checkpoint into the
// encoder.* slots of `store`; the toy backbone keeps its random init.
void load_pretrained_encoder(const EncoderConfig& config, nn::ParameterStore& store);

// s_{i-1} ⊕ s_i, with the zero vector standing in for s_{-1}.
RowVector pair_embedding(const DocumentEncoding& encoding, std::size_t i);

}  // namespace discprop
