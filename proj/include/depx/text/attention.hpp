#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "depx/numerics/layers.hpp"
#include "depx/numerics/ops.hpp"

namespace depx::text {

// Keys flagged false are padding: they receive exactly zero attention.
using PadMask = std::vector<bool>;

struct AttentionOutput {
  Tensor representation;        // [n x d_out]
  std::vector<Tensor> weights;  // one row-stochastic [n x n] matrix per head
  PadMask mask;
};

// Multi-head scaled dot-product self-attention (Q = K = V = X):
//   H_h = softmax((X Wq_h)(X Wk_h)^T / sqrt(d_head)) (X Wv_h)
//   out = concat(H_1..H_k) W0
// When the input width does not split evenly across heads, inputs first pass
// through a bias-free projection to `attn_dim`; W0 maps back to the input width.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;

  MultiHeadAttention(std::size_t in_dim, std::size_t heads, Rng& rng, std::optional<std::size_t> attn_dim = std::nullopt)
      : in_dim_(in_dim), attn_dim_(attn_dim.value_or(in_dim)), heads_(heads) {
    if (heads_ == 0 || attn_dim_ == 0 || attn_dim_ % heads_ != 0) {
      throw ConfigError("attention width " + std::to_string(attn_dim_) + " is not divisible by " +
                        std::to_string(heads_) + " heads");
    }
    if (attn_dim_ != in_dim_) projection = init_uniform({in_dim_, attn_dim_}, in_dim_, rng);
    query = init_uniform({attn_dim_, attn_dim_}, attn_dim_, rng);
    key = init_uniform({attn_dim_, attn_dim_}, attn_dim_, rng);
    value = init_uniform({attn_dim_, attn_dim_}, attn_dim_, rng);
    output = init_uniform({attn_dim_, in_dim_}, attn_dim_, rng);
  }

  std::size_t in_dim() const { return in_dim_; }
  std::size_t attn_dim() const { return attn_dim_; }
  std::size_t heads() const { return heads_; }
  std::size_t head_dim() const { return attn_dim_ / heads_; }
  bool has_projection() const { return attn_dim_ != in_dim_; }

  AttentionOutput operator()(const Tensor& x, PadMask mask = {}) const {
    if (x.rank() != 2 || x.cols() != in_dim_) {
      throw ContractError("attention expects [n x " + std::to_string(in_dim_) + "], got " + shape_str(x.shape()));
    }
    const std::size_t n = x.rows();
    if (n == 0) throw ContractError("attention over an empty sequence");
    if (mask.empty()) mask.assign(n, true);
    if (mask.size() != n) throw ContractError("pad mask length does not match sequence length");
    std::vector<double> key_weights(n * n);
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) any = any || mask[j];
    if (!any) throw ContractError("attention over a fully padded sequence");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) key_weights[i * n + j] = mask[j] ? 1.0 : 0.0;
    const Tensor keep({n, n}, std::move(key_weights));

    const Tensor h = has_projection() ? ops::matmul(x, projection) : x;
    const Tensor q = ops::matmul(h, query);
    const Tensor k = ops::matmul(h, key);
    const Tensor v = ops::matmul(h, value);
    const std::size_t dh = head_dim();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    AttentionOutput out;
    std::vector<Tensor> heads_out;
    for (std::size_t hd = 0; hd < heads_; ++hd) {
      const Tensor qh = ops::slice(q, 1, hd * dh, dh);
      const Tensor kh = ops::slice(k, 1, hd * dh, dh);
      const Tensor vh = ops::slice(v, 1, hd * dh, dh);
      const Tensor logits = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt);
      Tensor attn = ops::weighted_softmax_rows(logits, keep);
      heads_out.push_back(ops::matmul(attn, vh));
      out.weights.push_back(std::move(attn));
    }
    const Tensor cat = heads_ == 1 ? heads_out.front() : ops::concat(heads_out, 1);
    out.representation = ops::matmul(cat, output);
    out.mask = std::move(mask);
    return out;
  }

  void register_into(ParameterSet& params, const std::string& prefix) const {
    if (has_projection()) params.add(prefix + ".projection", projection);
    params.add(prefix + ".query", query);
    params.add(prefix + ".key", key);
    params.add(prefix + ".value", value);
    params.add(prefix + ".output", output);
  }

  Tensor projection;  // [in_dim x attn_dim], only when widths differ
  Tensor query;       // [attn_dim x attn_dim], head h owns columns [h*dh, (h+1)*dh)
  Tensor key;
  Tensor value;
  Tensor output;  // W0: [attn_dim x in_dim]

 private:
  std::size_t in_dim_ = 0;
  std::size_t attn_dim_ = 0;
  std::size_t heads_ = 1;
};

}  // namespace depx::text
