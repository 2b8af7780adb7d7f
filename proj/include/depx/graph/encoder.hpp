#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "depx/graph/knowledge_graph.hpp"
#include "depx/numerics/layers.hpp"
#include "depx/numerics/ops.hpp"

namespace depx::graph {

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

// Per-edge weights in [0, 1]; absent means every edge is fully present.
using EdgeMask = std::optional<Tensor>;

namespace detail {

inline Tensor full_mask(std::size_t edges) { return Tensor::filled({edges}, 1.0); }

inline Tensor pair_weights(const EdgeList& edges, std::size_t m, const EdgeMask& mask, double self_weight) {
  const Tensor w = mask ? *mask : full_mask(edges.size());
  if (w.rank() != 1 || w.size() != edges.size()) {
    throw ContractError("edge mask has " + std::to_string(w.size()) + " entries for " + std::to_string(edges.size()) +
                        " edges");
  }
  return ops::pair_weight_matrix(w, edges, m, self_weight);
}

}  // namespace detail

// h_v' = MLP((1 + eps) h_v + sum_{u in N(v)} w_uv h_u), with w_uv = 1 unless masked.
struct GinLayer {
  Tensor epsilon = Tensor::scalar(0.0, true);
  std::vector<FeedForward> mlp;

  GinLayer() = default;
  GinLayer(std::size_t in_dim, std::size_t hidden, Rng& rng) {
    mlp.emplace_back(in_dim, hidden, Activation::kRelu, rng);
    mlp.emplace_back(hidden, hidden, Activation::kRelu, rng);
  }

  std::size_t out_dim() const { return mlp.back().out_dim(); }

  Tensor operator()(const EdgeList& edges, const Tensor& h, const EdgeMask& mask = std::nullopt) const {
    if (h.rank() != 2) throw ContractError("GIN input must be a node matrix");
    const std::size_t m = h.rows();
    const Tensor neighbours = detail::pair_weights(edges, m, mask, 0.0);
    Tensor x = ops::add(ops::add(h, ops::scale_by(h, epsilon)), ops::matmul(neighbours, h));
    for (const auto& layer : mlp) x = layer(x);
    return x;
  }

  void register_into(ParameterSet& params, const std::string& prefix) const {
    params.add(prefix + ".epsilon", epsilon);
    for (std::size_t i = 0; i < mlp.size(); ++i) mlp[i].register_into(params, prefix + ".mlp" + std::to_string(i));
  }
};

struct GatOutput {
  Tensor nodes;               // [m x d]
  std::vector<Tensor> alpha;  // per head, [m x m], rows sum to 1 over N(i) and i itself
};

// Multi-head graph attention with head averaging:
//   alpha^k_ij = softmax_j(LeakyReLU(a_k^T [Theta_k h_i || Theta_k h_j])),  j in N(i) plus i
//   h_i' = ELU((1/K) sum_k sum_j alpha^k_ij Theta_k h_j)
// A soft edge mask enters as softmax(logit + log w), so w = 0 removes the edge.
struct GatLayer {
  static constexpr double kLeakySlope = 0.2;

  std::vector<Tensor> theta;      // per head [d x d]
  std::vector<Tensor> attention;  // per head [2d]

  GatLayer() = default;
  GatLayer(std::size_t dim, std::size_t heads, Rng& rng) {
    if (heads == 0) throw ConfigError("GAT needs at least one head");
    for (std::size_t k = 0; k < heads; ++k) {
      theta.push_back(init_uniform({dim, dim}, dim, rng));
      attention.push_back(init_uniform({2 * dim}, 2 * dim, rng));
    }
  }

  std::size_t heads() const { return theta.size(); }
  std::size_t dim() const { return theta.front().rows(); }

  GatOutput operator()(const EdgeList& edges, const Tensor& h, const EdgeMask& mask = std::nullopt) const {
    if (h.rank() != 2 || h.cols() != dim()) {
      throw ContractError("GAT expects [m x " + std::to_string(dim()) + "], got " + shape_str(h.shape()));
    }
    const std::size_t m = h.rows(), d = dim();
    const Tensor weights = detail::pair_weights(edges, m, mask, 1.0);
    GatOutput out;
    Tensor acc;
    for (std::size_t k = 0; k < heads(); ++k) {
      const Tensor proj = ops::matmul(h, theta[k]);
      const Tensor src = ops::reshape(ops::matmul(proj, ops::reshape(ops::slice(attention[k], 0, 0, d), {d, 1})), {m});
      const Tensor dst = ops::reshape(ops::matmul(proj, ops::reshape(ops::slice(attention[k], 0, d, d), {d, 1})), {m});
      const Tensor logits = ops::leaky_relu(ops::outer_sum(src, dst), kLeakySlope);
      Tensor alpha = ops::weighted_softmax_rows(logits, weights);
      const Tensor mixed = ops::matmul(alpha, proj);
      acc = k == 0 ? mixed : ops::add(acc, mixed);
      out.alpha.push_back(std::move(alpha));
    }
    out.nodes = ops::elu(ops::scale(acc, 1.0 / static_cast<double>(heads())));
    return out;
  }

  void register_into(ParameterSet& params, const std::string& prefix) const {
    for (std::size_t k = 0; k < heads(); ++k) {
      params.add(prefix + ".theta" + std::to_string(k), theta[k]);
      params.add(prefix + ".attention" + std::to_string(k), attention[k]);
    }
  }
};

// Coordinate-wise max over node rows.
inline Tensor readout(const Tensor& h) {
  if (h.rank() != 2 || h.rows() == 0) throw ContractError("readout over an empty graph");
  return ops::max_rows(h);
}

struct GraphEncoderConfig {
  std::size_t feature_dim = embedding::kSentenceDim;
  std::size_t hidden = 128;
  std::size_t gat_heads = 2;
};

// g = readout(GAT(GIN(GIN(F)))).
class GraphEncoder {
 public:
  GraphEncoder() = default;
  GraphEncoder(const GraphEncoderConfig& cfg, Rng& rng)
      : cfg_(cfg), gin1(cfg.feature_dim, cfg.hidden, rng), gin2(cfg.hidden, cfg.hidden, rng), gat(cfg.hidden, cfg.gat_heads, rng) {}

  const GraphEncoderConfig& config() const { return cfg_; }
  std::size_t output_dim() const { return cfg_.hidden; }

  struct Trace {
    Tensor gin1, gin2;
    GatOutput gat;
    Tensor g;
  };

  Trace trace(const KnowledgeGraph& graph, const EdgeMask& mask = std::nullopt) const {
    if (graph.empty()) throw ContractError("cannot encode an empty graph");
    if (graph.feature_dim() != cfg_.feature_dim) {
      throw ConfigError("graph features have width " + std::to_string(graph.feature_dim()) + ", encoder expects " +
                        std::to_string(cfg_.feature_dim));
    }
    const EdgeList edges = graph.edge_pairs();
    Trace t;
    t.gin1 = gin1(edges, graph.feature_matrix(), mask);
    t.gin2 = gin2(edges, t.gin1, mask);
    t.gat = gat(edges, t.gin2, mask);
    t.g = readout(t.gat.nodes);
    return t;
  }

  Tensor encode(const KnowledgeGraph& graph, const EdgeMask& mask = std::nullopt) const { return trace(graph, mask).g; }

  void register_into(ParameterSet& params, const std::string& prefix) const {
    gin1.register_into(params, prefix + ".gin1");
    gin2.register_into(params, prefix + ".gin2");
    gat.register_into(params, prefix + ".gat");
  }

 private:
  GraphEncoderConfig cfg_;

 public:
  GinLayer gin1;
  GinLayer gin2;
  GatLayer gat;
};

}  // namespace depx::graph
