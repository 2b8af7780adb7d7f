#pragma once

#include <optional>
#include <string>
#include <vector>

#include "depx/embedding/providers.hpp"
#include "depx/numerics/layers.hpp"
#include "depx/text/attention.hpp"
#include "depx/text/tokenize.hpp"

namespace depx::text {

struct TextEncoderConfig {
  std::size_t word_dim = embedding::kWordDim;
  // Words are projected to this width before attention so it splits evenly across heads.
  std::size_t word_attn_dim = 296;
  std::size_t sentence_dim = embedding::kSentenceDim;
  std::size_t hidden = 128;
  std::size_t heads = 8;

  std::size_t output_dim() const { return word_dim + 2 * hidden; }
};

// Representation branches that may be switched off for ablation:
// word level (block 1), sentence level (block 2), post level (block 3).
struct Blocks {
  bool word = true;
  bool sentence = true;
  bool post = true;

  bool all() const { return word && sentence && post; }
  friend bool operator==(const Blocks&, const Blocks&) = default;
};

// Embedded, padded encoder inputs for one post. Pure data; building it is the
// only place the embedding providers are consulted.
struct PostInputs {
  std::vector<Tensor> word_matrices;  // per sentence, [n_max x word_dim], zero rows at padding
  std::vector<PadMask> word_masks;
  Tensor sentence_matrix;             // [L x sentence_dim]
  Tensor post_vector;                 // [sentence_dim]
};

inline PostInputs embed_post_inputs(const TokenizedPost& post, const embedding::WordEmbedder& words,
                                    const embedding::SentenceEmbedder& sentences, const TextEncoderConfig& cfg) {
  if (words.dimension() != cfg.word_dim) {
    throw ConfigError("word embedder dimension " + std::to_string(words.dimension()) + " != configured " +
                      std::to_string(cfg.word_dim));
  }
  if (sentences.dimension() != cfg.sentence_dim) {
    throw ConfigError("sentence embedder dimension " + std::to_string(sentences.dimension()) + " != configured " +
                      std::to_string(cfg.sentence_dim));
  }
  if (post.sentences.empty()) throw ContractError("post \"" + post.id + "\" has no sentences");
  std::size_t longest = 0;
  for (const auto& s : post.sentences) longest = std::max(longest, s.size());

  PostInputs in;
  std::vector<double> sent_rows;
  for (std::size_t j = 0; j < post.sentences.size(); ++j) {
    const auto& toks = post.sentences[j];
    if (toks.empty()) throw ContractError("empty sentence in post \"" + post.id + "\"");
    std::vector<double> rows(longest * cfg.word_dim, 0.0);
    PadMask mask(longest, false);
    for (std::size_t k = 0; k < toks.size(); ++k) {
      const auto v = words.embed(toks[k]);
      if (v.size() != cfg.word_dim) throw ContractError("word vector has wrong dimension");
      std::copy(v.begin(), v.end(), rows.begin() + static_cast<std::ptrdiff_t>(k * cfg.word_dim));
      mask[k] = true;
    }
    in.word_matrices.emplace_back(Shape{longest, cfg.word_dim}, std::move(rows));
    in.word_masks.push_back(std::move(mask));
    const auto s = sentences.embed_sentence(post.sentence_texts[j]);
    if (s.size() != cfg.sentence_dim) throw ContractError("sentence vector has wrong dimension");
    sent_rows.insert(sent_rows.end(), s.begin(), s.end());
  }
  in.sentence_matrix = Tensor({post.sentences.size(), cfg.sentence_dim}, std::move(sent_rows));
  const auto p = sentences.embed_post(post.text);
  if (p.size() != cfg.sentence_dim) throw ContractError("post vector has wrong dimension");
  in.post_vector = Tensor::vector(p);
  return in;
}

struct PostEncoding {
  std::vector<AttentionOutput> words;      // per sentence; empty when the word block is off
  std::optional<AttentionOutput> sentences;
  Tensor p_prime;                          // [word_dim + 2 * hidden]
};

inline std::vector<double> mask_weights(const PadMask& m) {
  std::vector<double> w(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) w[i] = m[i] ? 1.0 : 0.0;
  return w;
}

// Multi-level attentive text representation:
//   w  = mean over sentences of the masked mean of word-attention rows   (word_dim)
//   s  = FFN_s(masked mean of sentence-attention rows)                   (hidden)
//   p' = w (+) s (+) FFN_p(post vector)                                   (word_dim + 2 hidden)
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const TextEncoderConfig& cfg, Rng& rng)
      : cfg_(cfg),
        word_attention(cfg.word_dim, cfg.heads, rng, cfg.word_attn_dim),
        sentence_attention(cfg.sentence_dim, cfg.heads, rng),
        sentence_ffn(cfg.sentence_dim, cfg.hidden, Activation::kRelu, rng),
        post_ffn(cfg.sentence_dim, cfg.hidden, Activation::kRelu, rng) {}

  const TextEncoderConfig& config() const { return cfg_; }

  AttentionOutput encode_words(const Tensor& word_matrix, const PadMask& mask) const {
    return word_attention(word_matrix, mask);
  }

  AttentionOutput encode_sentences(const Tensor& sentence_matrix, const PadMask& mask = {}) const {
    return sentence_attention(sentence_matrix, mask);
  }

  Tensor fuse_levels(const std::vector<AttentionOutput>& word_outputs, const AttentionOutput* sentence_output,
                     const Tensor* post_vector, const Blocks& blocks = {}) const {
    std::vector<Tensor> parts;
    if (blocks.word) {
      if (word_outputs.empty()) throw ContractError("fuse_levels: no word-level outputs");
      std::vector<Tensor> pooled;
      for (const auto& w : word_outputs) {
        if (w.representation.cols() != cfg_.word_dim) throw ContractError("fuse_levels: word output width mismatch");
        pooled.push_back(ops::weighted_mean_rows(w.representation, mask_weights(w.mask)));
      }
      parts.push_back(pooled.size() == 1 ? pooled.front() : ops::mean_rows(ops::stack_rows(pooled)));
    } else {
      parts.push_back(Tensor::zeros({cfg_.word_dim}));
    }
    if (blocks.sentence) {
      if (!sentence_output) throw ContractError("fuse_levels: missing sentence-level output");
      if (sentence_output->representation.cols() != cfg_.sentence_dim) {
        throw ContractError("fuse_levels: sentence output width mismatch");
      }
      parts.push_back(sentence_ffn(
          ops::weighted_mean_rows(sentence_output->representation, mask_weights(sentence_output->mask))));
    } else {
      parts.push_back(Tensor::zeros({cfg_.hidden}));
    }
    if (blocks.post) {
      if (!post_vector || post_vector->rank() != 1 || post_vector->size() != cfg_.sentence_dim) {
        throw ContractError("fuse_levels: post vector must have length " + std::to_string(cfg_.sentence_dim));
      }
      parts.push_back(post_ffn(*post_vector));
    } else {
      parts.push_back(Tensor::zeros({cfg_.hidden}));
    }
    return ops::concat(parts, 0);
  }

  PostEncoding encode(const PostInputs& in, const Blocks& blocks = {}) const {
    PostEncoding enc;
    if (blocks.word) {
      for (std::size_t j = 0; j < in.word_matrices.size(); ++j)
        enc.words.push_back(encode_words(in.word_matrices[j], in.word_masks[j]));
    }
    if (blocks.sentence) enc.sentences = encode_sentences(in.sentence_matrix);
    enc.p_prime = fuse_levels(enc.words, enc.sentences ? &*enc.sentences : nullptr, &in.post_vector, blocks);
    return enc;
  }

  void register_into(ParameterSet& params, const std::string& prefix) const {
    word_attention.register_into(params, prefix + ".word_attention");
    sentence_attention.register_into(params, prefix + ".sentence_attention");
    sentence_ffn.register_into(params, prefix + ".sentence_ffn");
    post_ffn.register_into(params, prefix + ".post_ffn");
  }

 private:
  TextEncoderConfig cfg_;

 public:
  MultiHeadAttention word_attention;
  MultiHeadAttention sentence_attention;
  FeedForward sentence_ffn;
  FeedForward post_ffn;
};

}  // namespace depx::text
