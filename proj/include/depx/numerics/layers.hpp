#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "depx/numerics/ops.hpp"
#include "depx/numerics/random.hpp"

namespace depx {

// Ordered, named collection of trainable tensors (the model state).
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor t) {
    for (const auto& [n, _] : entries_) {
      if (n == name) throw ContractError("duplicate parameter name: " + name);
    }
    entries_.emplace_back(std::move(name), std::move(t));
    return entries_.back().second;
  }

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : entries_)
      if (n == name) return &t;
    return nullptr;
  }

  void append(const ParameterSet& other) {
    for (const auto& [n, t] : other.entries_) add(n, t);
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& [_, t] : entries_) out.push_back(t);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }

  void zero_grad() const {
    for (auto [_, t] : entries_) t.zero_grad();
  }

  // FNV-1a over names, shapes and raw value bytes.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [n, t] : entries_) {
      h = fnv1a64(n, h);
      for (std::size_t d : t.shape()) h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&d), sizeof d), h);
      const auto v = t.data();
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)), h);
    }
    return h;
  }

  // Overwrites values from another set with identical names and shapes.
  // Writes through the shared tensor handles, so the set itself stays const.
  void copy_values_from(const ParameterSet& other) const {
    if (other.size() != size()) throw ContractError("parameter sets differ in size");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& [name, t] = entries_[i];
      const auto& [oname, ot] = other.entries_[i];
      if (name != oname || t.shape() != ot.shape()) throw ContractError("parameter mismatch at " + name);
      Tensor handle = t;
      auto dst = handle.mutable_data();
      std::copy(ot.data().begin(), ot.data().end(), dst.begin());
    }
  }

  // Deep copy of the current values (fresh leaves, same requires_grad flags).
  ParameterSet snapshot() const {
    ParameterSet out;
    for (const auto& [n, t] : entries_) out.add(n, Tensor(t.shape(), t.to_vector(), t.requires_grad()));
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialisation.
inline Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

enum class Activation { kIdentity, kRelu, kElu };

inline Tensor activate(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::kRelu:
      return ops::relu(x);
    case Activation::kElu:
      return ops::elu(x);
    case Activation::kIdentity:
      break;
  }
  return x;
}

// Single affine map followed by an activation: act(x W + b).
struct FeedForward {
  Tensor weight;  // [d_in x d_out]
  Tensor bias;    // [d_out]
  Activation activation = Activation::kRelu;

  FeedForward() = default;
  FeedForward(std::size_t d_in, std::size_t d_out, Activation act, Rng& rng)
      : weight(init_uniform({d_in, d_out}, d_in, rng)), bias(init_uniform({d_out}, d_in, rng)), activation(act) {}

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  Tensor operator()(const Tensor& x) const {
    if (x.cols() != in_dim()) {
      throw ContractError("feed-forward expects last dimension " + std::to_string(in_dim()) + ", got " +
                          shape_str(x.shape()));
    }
    return activate(ops::add_bias(ops::matmul(x, weight), bias), activation);
  }

  void register_into(ParameterSet& params, const std::string& prefix) const {
    params.add(prefix + ".weight", weight);
    params.add(prefix + ".bias", bias);
  }
};

}  // namespace depx
