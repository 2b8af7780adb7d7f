#pragma once

#include <string>
#include <vector>

#include "depx/embedding/providers.hpp"
#include "depx/graph/knowledge_graph.hpp"
#include "depx/model/model.hpp"
#include "depx/text/tokenize.hpp"

namespace fixtures {

using namespace depx;

// Small widths so finite differences stay fast.
inline model::ModelConfig tiny_model_config(std::size_t classes = 4) {
  model::ModelConfig c;
  c.text.word_dim = 8;
  c.text.word_attn_dim = 8;
  c.text.sentence_dim = 8;
  c.text.hidden = 4;
  c.text.heads = 2;
  c.graph.feature_dim = 8;
  c.graph.hidden = 6;
  c.graph.gat_heads = 2;
  c.head_hidden = 5;
  c.classes = classes;
  c.dropout = 0.0;
  return c;
}

// Five nodes, a cycle plus a chord, Gaussian features.
inline graph::KnowledgeGraph five_node_graph(std::size_t dim, std::uint64_t seed = 3) {
  std::vector<graph::GraphNode> nodes;
  for (std::size_t i = 0; i < 5; ++i) {
    nodes.push_back({"n" + std::to_string(i), "summary " + std::to_string(i),
                     embedding::gaussian_vector(seed * 31 + i, dim, 1.0)});
  }
  std::vector<graph::GraphEdge> edges{{0, "r", 1}, {1, "r", 2}, {2, "r", 3}, {3, "r", 4}, {4, "r", 0}, {0, "s", 2}};
  return graph::KnowledgeGraph(std::move(nodes), std::move(edges));
}

struct Embedders {
  embedding::WordEmbedder words;
  embedding::SentenceEmbedder sentences;
};

inline Embedders embedders_for(const model::ModelConfig& cfg, std::uint64_t seed = 11) {
  return {embedding::WordEmbedder::synthetic(seed, cfg.text.word_dim),
          embedding::SentenceEmbedder::synthetic(seed, cfg.text.sentence_dim)};
}

inline model::Example example(const std::string& id, const std::string& text, int label,
                              const model::ModelConfig& cfg, const Embedders& e) {
  const auto post = text::tokenize_post(id, text, label, 16, 64);
  return {text::embed_post_inputs(post, e.words, e.sentences, cfg.text), label};
}

}  // namespace fixtures

namespace fixtures {

// Six nodes; only nodes 0 and 1 carry nonzero features and (0, 1) is the only
// edge touching them. With zero biases in the GIN MLPs every other node stays
// at zero through all layers, so g depends on the mask of edge 0 alone.
inline graph::KnowledgeGraph single_informative_edge_graph(std::size_t dim) {
  std::vector<graph::GraphNode> nodes;
  for (std::size_t i = 0; i < 6; ++i) {
    std::vector<double> f(dim, 0.0);
    if (i < 2) f = embedding::gaussian_vector(100 + i, dim, 5.0);
    nodes.push_back({"v" + std::to_string(i), "", f});
  }
  std::vector<graph::GraphEdge> edges{{0, "r", 1}, {2, "r", 3}, {3, "r", 4}, {4, "r", 5}, {2, "r", 5}, {3, "r", 5}};
  return graph::KnowledgeGraph(std::move(nodes), std::move(edges));
}

inline graph::GraphEncoder zero_bias_encoder(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
  Rng rng(seed);
  graph::GraphEncoder enc({dim, hidden, 2}, rng);
  for (auto* gin : {&enc.gin1, &enc.gin2})
    for (auto& layer : gin->mlp)
      for (double& b : layer.bias.mutable_data()) b = 0.0;
  return enc;
}

}  // namespace fixtures
