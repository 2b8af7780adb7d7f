#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depx/graph/encoder.hpp"
#include "depx/log.hpp"
#include "depx/model/model.hpp"
#include "depx/numerics/adam.hpp"
#include "depx/text/tokenize.hpp"

namespace depx::explain {

struct RankedItem {
  std::size_t index = 0;
  double mass = 0.0;
};

// Attention mass per key position: mean over heads and non-pad queries,
// renormalized over non-pad keys. Sorted by mass descending, then position.
inline std::vector<RankedItem> attention_ranking(const text::AttentionOutput& attention) {
  if (attention.weights.empty()) throw ContractError("attention output carries no weights");
  const std::size_t n = attention.weights.front().rows();
  text::PadMask mask = attention.mask.empty() ? text::PadMask(n, true) : attention.mask;
  if (mask.size() != n) throw ContractError("pad mask length does not match attention size");
  std::vector<double> mass(n, 0.0);
  for (const auto& w : attention.weights) {
    for (std::size_t q = 0; q < n; ++q) {
      if (!mask[q]) continue;
      for (std::size_t k = 0; k < n; ++k) mass[k] += w.at(q, k);
    }
  }
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) total += mask[k] ? mass[k] : 0.0;
  if (!(total > 0.0)) throw NumericError("attention mass is zero over all tokens");
  std::vector<RankedItem> out;
  for (std::size_t k = 0; k < n; ++k)
    if (mask[k]) out.push_back({k, mass[k] / total});
  std::stable_sort(out.begin(), out.end(), [](const RankedItem& a, const RankedItem& b) { return a.mass > b.mass; });
  return out;
}

struct RankedToken {
  std::string token;
  std::size_t position = 0;
  double mass = 0.0;
};

inline std::vector<RankedToken> rank_tokens(const text::AttentionOutput& attention,
                                            const std::vector<std::string>& tokens) {
  std::vector<RankedToken> out;
  for (const auto& r : attention_ranking(attention)) {
    if (r.index >= tokens.size()) throw ContractError("attention covers more positions than there are tokens");
    out.push_back({tokens[r.index], r.index, r.mass});
  }
  return out;
}

// e'_ij = f_i (+) f_j, one row per edge.
inline Tensor edge_embeddings(const graph::KnowledgeGraph& kg) {
  if (kg.empty()) throw ContractError("edge embeddings of an empty graph");
  const std::size_t d = kg.feature_dim();
  std::vector<double> rows;
  rows.reserve(kg.edge_count() * 2 * d);
  for (const auto& e : kg.edges()) {
    const auto& h = kg.nodes()[e.head].feature;
    const auto& t = kg.nodes()[e.tail].feature;
    rows.insert(rows.end(), h.begin(), h.end());
    rows.insert(rows.end(), t.begin(), t.end());
  }
  return Tensor({kg.edge_count(), 2 * d}, std::move(rows));
}

// Linear edge scorer s = E' W_y + b_y.
struct EdgeScorer {
  FeedForward linear;

  EdgeScorer() = default;
  EdgeScorer(std::size_t feature_dim, Rng& rng) : linear(2 * feature_dim, 1, Activation::kIdentity, rng) {}

  static EdgeScorer zeros(std::size_t feature_dim) {
    Rng rng(0);
    EdgeScorer s(feature_dim, rng);
    std::fill(s.linear.weight.mutable_data().begin(), s.linear.weight.mutable_data().end(), 0.0);
    std::fill(s.linear.bias.mutable_data().begin(), s.linear.bias.mutable_data().end(), 0.0);
    return s;
  }

  Tensor scores(const Tensor& edge_rows) const {
    return ops::reshape(linear(edge_rows), {edge_rows.rows()});
  }

  void register_into(ParameterSet& params, const std::string& prefix) const { linear.register_into(params, prefix); }
};

inline std::vector<double> score_edges(const graph::KnowledgeGraph& kg, const EdgeScorer& scorer) {
  if (kg.edge_count() == 0) return {};
  return scorer.scores(edge_embeddings(kg)).to_vector();
}

enum class Fidelity { kGraph, kLogits };

struct ExplainerOptions {
  std::size_t epochs = 200;
  double lr = 0.01;
  double sparsity = 0.01;  // lambda
  double delta = 1.0;      // Smooth L1 threshold
  Fidelity fidelity = Fidelity::kGraph;
};

struct ExplainerResult {
  EdgeScorer scorer;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> history;  // loss before each update, then the last
};

// Representation whose drift under an edge mask is penalized.
using Representation = std::function<Tensor(const graph::EdgeMask&)>;

// Minimizes smooth_l1(f(G, 1), f(G, sigmoid(s))) + lambda mean(sigmoid(s)) over
// the scorer only. Returns the lowest-loss scorer seen, so final <= initial.
inline ExplainerResult train_explainer(const graph::KnowledgeGraph& kg, const Representation& f,
                                       EdgeScorer scorer, const ExplainerOptions& opts = {}) {
  if (kg.edge_count() == 0) throw ContractError("cannot train an explainer on a graph without edges");
  if (!(opts.sparsity >= 0.0) || !(opts.lr > 0.0)) throw ConfigError("explainer lr must be > 0 and sparsity >= 0");
  const Tensor rows = edge_embeddings(kg);
  const Tensor reference = f(std::nullopt).detach();
  ParameterSet params;
  scorer.register_into(params, "scorer");
  Adam adam(params.tensors(), {opts.lr});
  auto loss_at = [&] {
    const Tensor mask = ops::sigmoid(scorer.scores(rows));
    return ops::add(ops::smooth_l1(f(mask), reference, opts.delta), ops::scale(ops::mean(mask), opts.sparsity));
  };

  ExplainerResult result;
  ParameterSet best = params.snapshot();
  double best_loss = 0.0;
  for (std::size_t epoch = 0; epoch <= opts.epochs; ++epoch) {
    Tensor loss;
    try {
      loss = loss_at();
    } catch (const NumericError& e) {
      params.copy_values_from(best);
      throw TrainingError("explainer diverged at epoch " + std::to_string(epoch) + " (last finite loss " +
                          std::to_string(best_loss) + "): " + e.what());
    }
    const double value = loss.item();
    result.history.push_back(value);
    if (epoch == 0) result.initial_loss = best_loss = value;
    if (value < best_loss) {
      best_loss = value;
      best = params.snapshot();
    }
    if (epoch == opts.epochs) break;
    adam.zero_grad();
    backward(loss);
    adam.step();
  }
  params.copy_values_from(best);
  result.final_loss = best_loss;
  result.scorer = std::move(scorer);
  log::debug("explainer loss " + std::to_string(result.initial_loss) + " -> " + std::to_string(result.final_loss));
  return result;
}

// Graph-level fidelity on the KG encoder's pooled output g.
inline Representation graph_fidelity(const graph::KnowledgeGraph& kg, const graph::GraphEncoder& encoder) {
  return [&kg, &encoder](const graph::EdgeMask& mask) { return encoder.encode(kg, mask); };
}

// Logit-level fidelity: head logits averaged over `posts` with the text side fixed.
inline Representation logit_fidelity(const graph::KnowledgeGraph& kg, const model::DepressionModel& m,
                                     const std::vector<text::PostInputs>& posts) {
  if (posts.empty()) throw ConfigError("logit fidelity needs at least one post");
  return [&kg, &m, &posts](const graph::EdgeMask& mask) {
    const Tensor g = m.encode_graph(kg, mask);
    std::vector<Tensor> logits;
    for (const auto& p : posts) logits.push_back(m.forward(p, g).logits);
    return ops::mean_rows(ops::stack_rows(logits));
  };
}

struct Subgraph {
  std::size_t k = 0;
  std::vector<std::size_t> edges;  // indices into the source graph, best first
  std::vector<double> scores;
  std::vector<std::size_t> complement;

  std::vector<std::size_t> nodes(const graph::KnowledgeGraph& kg) const {
    std::vector<std::size_t> out;
    for (std::size_t e : edges) {
      out.push_back(kg.edges()[e].head);
      out.push_back(kg.edges()[e].tail);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  Tensor hard_mask(std::size_t edge_count) const {
    std::vector<double> m(edge_count, 0.0);
    for (std::size_t e : edges) m[e] = 1.0;
    return Tensor::vector(std::move(m));
  }

  nlohmann::json to_json(const graph::KnowledgeGraph& kg) const {
    nlohmann::json j;
    j["k"] = k;
    auto& arr = j["edges"] = nlohmann::json::array();
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const auto& e = kg.edges()[edges[i]];
      arr.push_back({{"head", kg.nodes()[e.head].entity},
                     {"relation", e.relation},
                     {"tail", kg.nodes()[e.tail].entity},
                     {"score", scores[i]}});
    }
    return j;
  }
};

// The min(k, |E|) highest-scoring edges, ordered by (-score, edge id).
inline Subgraph extract_subgraph(const std::vector<double>& scores, std::size_t top_k) {
  if (top_k == 0) throw ConfigError("top-k must be at least 1");
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("non-finite edge score");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  Subgraph s;
  s.k = top_k;
  const std::size_t take = std::min(top_k, scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < take) {
      s.edges.push_back(order[i]);
      s.scores.push_back(scores[order[i]]);
    } else {
      s.complement.push_back(order[i]);
    }
  }
  std::sort(s.complement.begin(), s.complement.end());
  return s;
}

// Smooth L1 distance between g on the full graph and on the hard subgraph.
inline double subgraph_fidelity(const graph::KnowledgeGraph& kg, const graph::GraphEncoder& encoder,
                                const std::vector<std::size_t>& edges, double delta = 1.0) {
  Subgraph s;
  s.edges = edges;
  return ops::smooth_l1(encoder.encode(kg, s.hard_mask(kg.edge_count())), encoder.encode(kg), delta).item();
}

struct SentenceExplanation {
  std::size_t index = 0;
  std::string text;
  double mass = 0.0;
  std::vector<RankedToken> tokens;
};

struct ExplanationBundle {
  std::string post_id;
  model::Prediction prediction;
  std::vector<std::string> labels;
  std::vector<SentenceExplanation> sentences;  // by mass, descending
  nlohmann::json subgraph;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["post_id"] = post_id;
    j["predicted"] = {{"class", prediction.predicted_rank},
                      {"label", labels.at(static_cast<std::size_t>(prediction.predicted_rank))},
                      {"probabilities", prediction.probabilities}};
    auto& arr = j["sentences"] = nlohmann::json::array();
    for (const auto& s : sentences) {
      nlohmann::json toks = nlohmann::json::array();
      for (const auto& t : s.tokens) toks.push_back({{"token", t.token}, {"position", t.position}, {"mass", t.mass}});
      arr.push_back({{"index", s.index}, {"text", s.text}, {"mass", s.mass}, {"tokens", toks}});
    }
    j["subgraph"] = subgraph;
    return j;
  }
};

// Requires the word and sentence blocks; the subgraph is model-level and shared.
inline ExplanationBundle explain_post(const text::TokenizedPost& post, const text::PostInputs& inputs,
                                      const model::DepressionModel& m, const Tensor& g, const nlohmann::json& subgraph) {
  const auto& blocks = m.config().blocks;
  if (!blocks.word || !blocks.sentence) throw ConfigError("explanations need the word and sentence blocks enabled");
  const auto fw = m.forward(inputs, g);
  ExplanationBundle b;
  b.post_id = post.id;
  b.prediction = model::predict_from_logits(fw.logits);
  b.prediction.fused = fw.z.to_vector();
  b.labels = m.scale().labels;
  b.subgraph = subgraph;
  for (const auto& r : attention_ranking(*fw.text.sentences)) {
    SentenceExplanation s;
    s.index = r.index;
    s.text = post.sentence_texts.at(r.index);
    s.mass = r.mass;
    s.tokens = rank_tokens(fw.text.words.at(r.index), post.sentences.at(r.index));
    b.sentences.push_back(std::move(s));
  }
  return b;
}

}  // namespace depx::explain
