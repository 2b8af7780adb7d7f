#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depx/graph/encoder.hpp"
#include "depx/model/fusion.hpp"
#include "depx/text/encoder.hpp"

namespace depx::model {

struct ModelConfig {
  text::TextEncoderConfig text;
  graph::GraphEncoderConfig graph;
  std::size_t classes = 4;
  double beta = 3.0;
  double dropout = 0.4;
  std::size_t head_hidden = 128;
  text::Blocks blocks;

  std::size_t fused_dim() const { return text.output_dim() + graph.hidden; }

  void validate() const {
    if (classes < 2) throw ConfigError("class count must be at least 2");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (head_hidden == 0 || graph.hidden == 0 || text.hidden == 0) throw ConfigError("hidden sizes must be positive");
    if (text.heads == 0 || text.word_attn_dim % text.heads != 0) {
      throw ConfigError("word attention width must be divisible by the head count");
    }
    if (text.sentence_dim % text.heads != 0) throw ConfigError("sentence width must be divisible by the head count");
    if (graph.gat_heads == 0) throw ConfigError("gat_heads must be positive");
    if (graph.feature_dim != text.sentence_dim) {
      throw ConfigError("graph node features must share the sentence embedding width");
    }
    SeverityScale::with_classes(classes, beta);
  }

  nlohmann::json to_json() const {
    return {{"word_dim", text.word_dim},
            {"word_attn_dim", text.word_attn_dim},
            {"sentence_dim", text.sentence_dim},
            {"hidden", text.hidden},
            {"heads", text.heads},
            {"graph_hidden", graph.hidden},
            {"gat_heads", graph.gat_heads},
            {"classes", classes},
            {"beta", beta},
            {"dropout", dropout},
            {"head_hidden", head_hidden},
            {"blocks", {{"word", blocks.word}, {"sentence", blocks.sentence}, {"post", blocks.post}}}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.text.word_dim = j.at("word_dim");
    c.text.word_attn_dim = j.at("word_attn_dim");
    c.text.sentence_dim = j.at("sentence_dim");
    c.text.hidden = j.at("hidden");
    c.text.heads = j.at("heads");
    c.graph.feature_dim = c.text.sentence_dim;
    c.graph.hidden = j.at("graph_hidden");
    c.graph.gat_heads = j.at("gat_heads");
    c.classes = j.at("classes");
    c.beta = j.at("beta");
    c.dropout = j.at("dropout");
    c.head_hidden = j.at("head_hidden");
    const auto& b = j.at("blocks");
    c.blocks = {b.at("word"), b.at("sentence"), b.at("post")};
    c.validate();
    return c;
  }
};

struct Example {
  text::PostInputs inputs;
  int label = 0;
};

// Text encoder + KG encoder + severity head. The graph representation g does
// not depend on the post, so callers compute it once per batch.
class DepressionModel {
 public:
  DepressionModel() = default;
  DepressionModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    text_ = text::TextEncoder(cfg_.text, rng);
    graph_ = graph::GraphEncoder(cfg_.graph, rng);
    head_ = SeverityHead(cfg_.fused_dim(), cfg_.head_hidden, cfg_.classes, rng);
    text_.register_into(params_, "text");
    graph_.register_into(params_, "graph");
    head_.register_into(params_, "head");
  }

  const ModelConfig& config() const { return cfg_; }
  const ParameterSet& parameters() const { return params_; }
  const text::TextEncoder& text_encoder() const { return text_; }
  const graph::GraphEncoder& graph_encoder() const { return graph_; }
  SeverityScale scale() const { return SeverityScale::with_classes(cfg_.classes, cfg_.beta); }

  Tensor encode_graph(const graph::KnowledgeGraph& kg, const graph::EdgeMask& mask = std::nullopt) const {
    return graph_.encode(kg, mask);
  }

  struct Forward {
    text::PostEncoding text;
    Tensor z;
    Tensor logits;
  };

  // Dropout acts on z and only when `rng` is given.
  Forward forward(const text::PostInputs& in, const Tensor& g, Rng* rng = nullptr) const {
    Forward f;
    f.text = text_.encode(in, cfg_.blocks);
    f.z = fuse(f.text.p_prime, g, cfg_.text.output_dim(), cfg_.graph.hidden);
    const Tensor z = rng ? ops::dropout(f.z, cfg_.dropout, *rng, true) : f.z;
    f.logits = head_.logits(z);
    return f;
  }

  Prediction predict(const text::PostInputs& in, const Tensor& g) const {
    const Forward f = forward(in, g);
    Prediction p = predict_from_logits(f.logits);
    p.fused = f.z.to_vector();
    return p;
  }

  // Mean soft-label cross-entropy over a batch.
  Tensor batch_loss(const std::vector<const Example*>& batch, const graph::KnowledgeGraph& kg, Rng* rng = nullptr) const {
    if (batch.empty()) throw ContractError("empty batch");
    const Tensor g = encode_graph(kg);
    const SeverityScale s = scale();
    Tensor total;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Tensor probs = ops::softmax(forward(batch[i]->inputs, g, rng).logits, 0);
      const Tensor loss = ordinal_loss(probs, Tensor::vector(soft_labels(batch[i]->label, s)));
      total = i == 0 ? loss : ops::add(total, loss);
    }
    return ops::scale(total, 1.0 / static_cast<double>(batch.size()));
  }

 private:
  ModelConfig cfg_;
  text::TextEncoder text_;
  graph::GraphEncoder graph_;
  SeverityHead head_;
  ParameterSet params_;
};

}  // namespace depx::model
