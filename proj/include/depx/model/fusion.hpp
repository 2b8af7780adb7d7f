#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "depx/log.hpp"
#include "depx/numerics/layers.hpp"
#include "depx/numerics/ops.hpp"

namespace depx::model {

// Ordered severity classes; rank i is the position in `labels`.
struct SeverityScale {
  std::vector<std::string> labels{"minimum", "mild", "moderate", "severe"};
  double beta = 3.0;

  static SeverityScale with_classes(std::size_t count, double beta) {
    SeverityScale s;
    if (count == 4) {
      s.labels = {"minimum", "mild", "moderate", "severe"};
    } else if (count == 3) {
      s.labels = {"minimum", "moderate", "severe"};
    } else {
      s.labels.clear();
      for (std::size_t i = 0; i < count; ++i) s.labels.push_back("class" + std::to_string(i));
    }
    s.beta = beta;
    s.validate();
    return s;
  }

  std::size_t size() const { return labels.size(); }

  void validate() const {
    if (labels.size() < 2) throw ConfigError("a severity scale needs at least two classes");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("severity penalty beta must be finite and >= 0");
  }
};

// y_i = exp(-beta |r - i|) / sum_k exp(-beta |r - k|)
inline std::vector<double> soft_labels(int true_rank, const SeverityScale& scale) {
  scale.validate();
  const auto c = static_cast<int>(scale.size());
  if (true_rank < 0 || true_rank >= c) {
    throw ContractError("rank " + std::to_string(true_rank) + " outside [0, " + std::to_string(c) + ")");
  }
  std::vector<double> y(scale.size());
  double z = 0.0;
  for (int i = 0; i < c; ++i) z += y[static_cast<std::size_t>(i)] = std::exp(-scale.beta * std::abs(true_rank - i));
  for (double& v : y) v /= z;
  return y;
}

// Soft-label cross-entropy -sum_i y_i log p_i; probabilities are floored at 1e-12.
inline Tensor ordinal_loss(const Tensor& probabilities, const Tensor& soft_target) {
  if (probabilities.shape() != soft_target.shape()) throw ContractError("ordinal_loss: shape mismatch");
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] < ops::kProbabilityFloor && soft_target[i] > 0.0) {
      log::debug("ordinal_loss: probability " + std::to_string(probabilities[i]) + " clamped for class " +
                 std::to_string(i));
    }
  }
  return ops::soft_cross_entropy(probabilities, soft_target);
}

// Index of the largest entry; ties resolve to the lowest (least severe) rank.
inline int argmax_lowest(std::span<const double> v) {
  if (v.empty()) throw ContractError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<int>(best);
}

struct Prediction {
  std::vector<double> probabilities;
  int predicted_rank = 0;
  std::vector<double> fused;
};

inline Prediction predict_from_logits(const Tensor& logits) {
  const Tensor probs = ops::softmax(logits, 0);
  Prediction p;
  p.probabilities = probs.to_vector();
  p.predicted_rank = argmax_lowest(p.probabilities);
  return p;
}

// z = p' (+) g
inline Tensor fuse(const Tensor& p_prime, const Tensor& g, std::size_t text_dim, std::size_t graph_dim) {
  if (p_prime.rank() != 1 || p_prime.size() != text_dim) {
    throw ContractError("fuse: text representation must have length " + std::to_string(text_dim));
  }
  if (g.rank() != 1 || g.size() != graph_dim) {
    throw ContractError("fuse: graph representation must have length " + std::to_string(graph_dim));
  }
  return ops::concat({p_prime, g}, 0);
}

// Output network: z -> hidden (ReLU) -> class logits.
struct SeverityHead {
  FeedForward hidden;
  FeedForward output;

  SeverityHead() = default;
  SeverityHead(std::size_t in_dim, std::size_t hidden_dim, std::size_t classes, Rng& rng)
      : hidden(in_dim, hidden_dim, Activation::kRelu, rng), output(hidden_dim, classes, Activation::kIdentity, rng) {}

  Tensor logits(const Tensor& z) const { return output(hidden(z)); }

  void register_into(ParameterSet& params, const std::string& prefix) const {
    hidden.register_into(params, prefix + ".hidden");
    output.register_into(params, prefix + ".output");
  }
};

}  // namespace depx::model
