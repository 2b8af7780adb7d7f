#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "depx/numerics/tensor.hpp"

// Differentiable primitives. Every function here returns a fresh tensor and,
// when an input requires a gradient, records how to push gradients back.
namespace depx::ops {

namespace detail {

using depx::detail::make_result;
using depx::detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

inline ConstMapMat view(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return ConstMapMat(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline MapMat view(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MapMat(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

inline void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw ContractError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

// Elementwise map with derivative expressed through input x and output y.
template <class F, class D>
Tensor unary(const char* op, const Tensor& x, F f, D dfdx) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [dfdx](Node& n) {
    Node& p = *n.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * dfdx(p.value[i], n.value[i]);
  });
}

}  // namespace detail

// C = A . B. A rank-1 left operand is treated as a single row and yields a rank-1 result.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || b.rank() != 2) {
    throw ContractError("matmul: unsupported operand ranks " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ContractError("matmul: inner dimensions differ " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  detail::view(out, m, n).noalias() = detail::view(a.node()->value, m, k) * detail::view(b.node()->value, k, n);
  Shape shape = a.rank() == 1 ? Shape{n} : Shape{m, n};
  return detail::make_result("matmul", std::move(shape), std::move(out), {a, b}, [m, k, n](detail::Node& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    const auto dc = detail::view(node.grad, m, n);
    if (pa.requires_grad) {
      detail::view(pa.ensure_grad(), m, k).noalias() += dc * detail::view(pb.value, k, n).transpose();
    }
    if (pb.requires_grad) {
      detail::view(pb.ensure_grad(), k, n).noalias() += detail::view(pa.value, m, k).transpose() * dc;
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  detail::view(out, c, r) = detail::view(a.node()->value, r, c).transpose();
  return detail::make_result("transpose", {c, r}, std::move(out), {a}, [r, c](detail::Node& n) {
    detail::view(n.parents[0]->ensure_grad(), r, c) += detail::view(n.grad, c, r).transpose();
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ContractError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes the element count");
  }
  return detail::make_result("reshape", std::move(shape), a.to_vector(), {a}, [](detail::Node& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result("add", a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    for (auto& p : n.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result("sub", a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    const double sign[2] = {1.0, -1.0};
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = n.parents[k];
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * n.grad[i];
    }
  });
}

// Elementwise (Hadamard) product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result("mul", a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
    }
  });
}

// Adds a length-d bias to every row of an [m x d] matrix (or to a length-d vector).
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || bias.size() != x.cols()) {
    throw ContractError("add_bias: bias " + shape_str(bias.shape()) + " does not fit " + shape_str(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + bias[j];
  return detail::make_result("add_bias", x.shape(), std::move(out), {x, bias}, [r, c](detail::Node& n) {
    auto& px = *n.parents[0];
    auto& pb = *n.parents[1];
    if (px.requires_grad) {
      auto& g = px.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j];
    }
  });
}

inline Tensor scale(const Tensor& x, double s) {
  return detail::unary("scale", x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

// x * s where s is a differentiable scalar tensor.
inline Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw ContractError("scale_by: factor must be a scalar, got " + shape_str(s.shape()));
  const double f = s.item();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * f;
  return detail::make_result("scale_by", x.shape(), std::move(out), {x, s}, [](detail::Node& n) {
    auto& px = *n.parents[0];
    auto& ps = *n.parents[1];
    if (px.requires_grad) {
      auto& g = px.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * ps.value[0];
    }
    if (ps.requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * px.value[i];
      ps.ensure_grad()[0] += acc;
    }
  });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor elu(const Tensor& x, double alpha = 1.0) {
  return detail::unary(
      "elu", x, [alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); },
      [alpha](double v, double y) { return v > 0.0 ? 1.0 : y + alpha; });
}

inline Tensor leaky_relu(const Tensor& x, double slope) {
  return detail::unary(
      "leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

// Numerically stable softmax along `axis` (0 = down columns, last = along rows).
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  if (x.rank() == 0 || axis >= x.rank()) {
    throw ContractError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  }
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  }
  const std::size_t r = x.rows(), c = x.cols();
  const bool along_rows = axis == x.rank() - 1;
  const std::size_t groups = along_rows ? r : c, len = along_rows ? c : r;
  const std::size_t stride = along_rows ? 1 : c, gstride = along_rows ? c : 1;
  std::vector<double> out(x.size());
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * gstride;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, x[base + i * stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) z += out[base + i * stride] = std::exp(x[base + i * stride] - mx);
    for (std::size_t i = 0; i < len; ++i) out[base + i * stride] /= z;
  }
  return detail::make_result("softmax", x.shape(), std::move(out), {x},
                             [groups, len, stride, gstride](detail::Node& n) {
                               auto& g = n.parents[0]->ensure_grad();
                               for (std::size_t k = 0; k < groups; ++k) {
                                 const std::size_t base = k * gstride;
                                 double dot = 0.0;
                                 for (std::size_t i = 0; i < len; ++i)
                                   dot += n.grad[base + i * stride] * n.value[base + i * stride];
                                 for (std::size_t i = 0; i < len; ++i) {
                                   const std::size_t at = base + i * stride;
                                   g[at] += n.value[at] * (n.grad[at] - dot);
                                 }
                               }
                             });
}

// Row-wise softmax with non-negative multiplicative weights:
//   out[i][j] = w[i][j] exp(l[i][j]) / sum_k w[i][k] exp(l[i][k]),
// i.e. softmax(l + log w). Zero weights yield exactly zero probability, which is
// how padding masks and (soft) edge masks enter attention. Differentiable in
// both the logits and the weights.
inline Tensor weighted_softmax_rows(const Tensor& logits, const Tensor& weights) {
  detail::require_matrix(logits, "weighted_softmax_rows");
  detail::require_same_shape(logits, weights, "weighted_softmax_rows");
  const std::size_t r = logits.rows(), c = logits.cols();
  std::vector<double> out(r * c, 0.0);
  // exp(l - rowmax) for every entry, kept for the weight gradient.
  auto expo = std::make_shared<std::vector<double>>(r * c, 0.0);
  auto norm = std::make_shared<std::vector<double>>(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      const double w = weights[i * c + j];
      if (w < 0.0 || !std::isfinite(w)) throw ContractError("weighted_softmax_rows: weights must be finite and >= 0");
      if (w > 0.0) mx = std::max(mx, logits[i * c + j]);
    }
    if (!std::isfinite(mx)) throw ContractError("weighted_softmax_rows: row " + std::to_string(i) + " has no support");
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(std::min(logits[i * c + j] - mx, 700.0));
      (*expo)[i * c + j] = e;
      z += weights[i * c + j] * e;
    }
    (*norm)[i] = z;
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = weights[i * c + j] * (*expo)[i * c + j] / z;
  }
  return detail::make_result("weighted_softmax_rows", logits.shape(), std::move(out), {logits, weights},
                             [r, c, expo, norm](detail::Node& n) {
                               auto& pl = *n.parents[0];
                               auto& pw = *n.parents[1];
                               for (std::size_t i = 0; i < r; ++i) {
                                 double dot = 0.0;
                                 for (std::size_t j = 0; j < c; ++j) dot += n.grad[i * c + j] * n.value[i * c + j];
                                 if (pl.requires_grad) {
                                   auto& g = pl.ensure_grad();
                                   for (std::size_t j = 0; j < c; ++j)
                                     g[i * c + j] += n.value[i * c + j] * (n.grad[i * c + j] - dot);
                                 }
                                 if (pw.requires_grad) {
                                   auto& g = pw.ensure_grad();
                                   for (std::size_t j = 0; j < c; ++j)
                                     g[i * c + j] += (*expo)[i * c + j] / (*norm)[i] * (n.grad[i * c + j] - dot);
                                 }
                               }
                             });
}

// Concatenation of rank-1 tensors, or of matrices along axis 0 (rows) / 1 (columns).
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis = 0) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const std::size_t rank = parts.front().rank();
  if (rank == 0 || axis >= rank) throw ContractError("concat: invalid axis");
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ContractError("concat: rank mismatch");
    if (rank == 2 && axis == 0 && p.cols() != parts.front().cols()) throw ContractError("concat: column mismatch");
    if (rank == 2 && axis == 1 && p.rows() != parts.front().rows()) throw ContractError("concat: row mismatch");
  }
  std::vector<std::size_t> widths;
  std::vector<double> out;
  Shape shape;
  if (rank == 1 || axis == 0) {
    std::size_t lead = 0;
    for (const auto& p : parts) {
      widths.push_back(p.size());
      lead += rank == 1 ? p.size() : p.rows();
      out.insert(out.end(), p.data().begin(), p.data().end());
    }
    shape = rank == 1 ? Shape{lead} : Shape{lead, parts.front().cols()};
    return detail::make_result("concat", std::move(shape), std::move(out), parts, [widths](detail::Node& n) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        auto& p = *n.parents[k];
        if (p.requires_grad) {
          auto& g = p.ensure_grad();
          for (std::size_t i = 0; i < widths[k]; ++i) g[i] += n.grad[off + i];
        }
        off += widths[k];
      }
    });
  }
  const std::size_t r = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    widths.push_back(p.cols());
    total += p.cols();
  }
  out.resize(r * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out[i * total + off + j] = p.at(i, j);
    off += p.cols();
  }
  return detail::make_result("concat", {r, total}, std::move(out), parts, [widths, r, total](detail::Node& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto& p = *n.parents[k];
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += n.grad[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

// Contiguous slice of `len` entries starting at `start` along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  if (x.rank() == 0 || axis >= x.rank()) throw ContractError("slice: invalid axis");
  const std::size_t extent = x.shape()[axis];
  if (start + len > extent) throw ContractError("slice: range exceeds extent " + std::to_string(extent));
  const std::size_t r = x.rows(), c = x.cols();
  const bool cols_axis = axis == x.rank() - 1;
  const std::size_t out_r = cols_axis ? r : len, out_c = cols_axis ? len : c;
  const std::size_t r0 = cols_axis ? 0 : start, c0 = cols_axis ? start : 0;
  std::vector<double> out(out_r * out_c);
  for (std::size_t i = 0; i < out_r; ++i)
    for (std::size_t j = 0; j < out_c; ++j) out[i * out_c + j] = x[(r0 + i) * c + c0 + j];
  Shape shape = x.rank() == 1 ? Shape{len} : Shape{out_r, out_c};
  return detail::make_result("slice", std::move(shape), std::move(out), {x},
                             [out_r, out_c, r0, c0, c](detail::Node& n) {
                               auto& g = n.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < out_r; ++i)
                                 for (std::size_t j = 0; j < out_c; ++j)
                                   g[(r0 + i) * c + c0 + j] += n.grad[i * out_c + j];
                             });
}

// Row i of a matrix as a rank-1 tensor.
inline Tensor row(const Tensor& x, std::size_t i) {
  detail::require_matrix(x, "row");
  return reshape(slice(x, 0, i, 1), {x.cols()});
}

// Stacks rank-1 tensors of equal length into a matrix.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ContractError("stack_rows: no inputs");
  const std::size_t d = rows.front().size();
  std::vector<Tensor> mats;
  mats.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.rank() != 1 || r.size() != d) throw ContractError("stack_rows: rows must be vectors of equal length");
    mats.push_back(reshape(r, {1, d}));
  }
  return concat(mats, 0);
}

// Weighted average of matrix rows: sum_i w_i x_i / sum_i w_i with constant weights.
inline Tensor weighted_mean_rows(const Tensor& x, const std::vector<double>& w) {
  detail::require_matrix(x, "weighted_mean_rows");
  const std::size_t r = x.rows(), c = x.cols();
  if (w.size() != r) throw ContractError("weighted_mean_rows: weight count does not match rows");
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0)) throw ContractError("weighted_mean_rows: weights sum to zero");
  std::vector<double> coef(r);
  for (std::size_t i = 0; i < r; ++i) coef[i] = w[i] / total;
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    if (coef[i] == 0.0) continue;
    for (std::size_t j = 0; j < c; ++j) out[j] += coef[i] * x[i * c + j];
  }
  return detail::make_result("weighted_mean_rows", {c}, std::move(out), {x}, [coef, r, c](detail::Node& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += coef[i] * n.grad[j];
  });
}

inline Tensor mean_rows(const Tensor& x) { return weighted_mean_rows(x, std::vector<double>(x.rows(), 1.0)); }

// Column-wise maximum over rows; the gradient flows to the first maximal row.
inline Tensor max_rows(const Tensor& x) {
  detail::require_matrix(x, "max_rows");
  const std::size_t r = x.rows(), c = x.cols();
  if (r == 0) throw ContractError("max_rows: empty matrix");
  std::vector<double> out(c);
  std::vector<std::size_t> arg(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    out[j] = x[j];
    for (std::size_t i = 1; i < r; ++i) {
      if (x[i * c + j] > out[j]) {
        out[j] = x[i * c + j];
        arg[j] = i;
      }
    }
  }
  return detail::make_result("max_rows", {c}, std::move(out), {x}, [arg, c](detail::Node& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t j = 0; j < c; ++j) g[arg[j] * c + j] += n.grad[j];
  });
}

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result("sum", {}, {s}, {x}, [](detail::Node& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (double& v : g) v += n.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

// Mean over elements of the Huber-style piecewise loss
//   0.5 x^2 / delta  if |x| < delta,   |x| - 0.5 delta  otherwise,   x = pred - target.
inline Tensor smooth_l1(const Tensor& pred, const Tensor& target, double delta = 1.0) {
  detail::require_same_shape(pred, target, "smooth_l1");
  if (!(delta > 0.0)) throw ContractError("smooth_l1: delta must be positive");
  const std::size_t n = pred.size();
  if (n == 0) throw ContractError("smooth_l1: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pred[i] - target[i];
    acc += std::abs(x) < delta ? 0.5 * x * x / delta : std::abs(x) - 0.5 * delta;
  }
  acc /= static_cast<double>(n);
  return detail::make_result("smooth_l1", {}, {acc}, {pred, target}, [delta, n](detail::Node& node) {
    auto& pp = *node.parents[0];
    auto& pt = *node.parents[1];
    const double scale = node.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = pp.value[i] - pt.value[i];
      const double d = std::abs(x) < delta ? x / delta : (x > 0.0 ? 1.0 : -1.0);
      if (pp.requires_grad) pp.ensure_grad()[i] += scale * d;
      if (pt.requires_grad) pt.ensure_grad()[i] -= scale * d;
    }
  });
}

inline constexpr double kProbabilityFloor = 1e-12;

// Cross-entropy -sum_i y_i log(max(p_i, floor)) of a predicted distribution against a constant target.
inline Tensor soft_cross_entropy(const Tensor& probs, const Tensor& target) {
  detail::require_same_shape(probs, target, "soft_cross_entropy");
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (target[i] != 0.0) acc -= target[i] * std::log(std::max(probs[i], kProbabilityFloor));
  }
  return detail::make_result("soft_cross_entropy", {}, {acc}, {probs, target}, [](detail::Node& n) {
    auto& pp = *n.parents[0];
    auto& pt = *n.parents[1];
    if (pp.requires_grad) {
      auto& g = pp.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (pp.value[i] > kProbabilityFloor) g[i] -= n.grad[0] * pt.value[i] / pp.value[i];
      }
    }
    if (pt.requires_grad) {
      auto& g = pt.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[0] * std::log(std::max(pp.value[i], kProbabilityFloor));
    }
  });
}

// u[i] + v[j] as an [m x n] matrix.
inline Tensor outer_sum(const Tensor& u, const Tensor& v) {
  if (u.rank() != 1 || v.rank() != 1) throw ContractError("outer_sum: expects two vectors");
  const std::size_t m = u.size(), k = v.size();
  std::vector<double> out(m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = u[i] + v[j];
  return detail::make_result("outer_sum", {m, k}, std::move(out), {u, v}, [m, k](detail::Node& n) {
    auto& pu = *n.parents[0];
    auto& pv = *n.parents[1];
    if (pu.requires_grad) {
      auto& g = pu.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) g[i] += n.grad[i * k + j];
    }
    if (pv.requires_grad) {
      auto& g = pv.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) g[j] += n.grad[i * k + j];
    }
  });
}

// Symmetric [m x m] pair-weight matrix from per-edge weights in [0, 1].
// Several edges joining the same unordered pair combine as 1 - prod(1 - w_e),
// so a pair is fully present when any of its edges is. The diagonal is fixed
// to `self_weight`.
inline Tensor pair_weight_matrix(const Tensor& edge_weights, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                 std::size_t m, double self_weight) {
  if (edge_weights.rank() != 1 || edge_weights.size() != edges.size()) {
    throw ContractError("pair_weight_matrix: " + std::to_string(edge_weights.size()) + " weights for " +
                        std::to_string(edges.size()) + " edges");
  }
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [a, b] = edges[e];
    if (a >= m || b >= m || a == b) throw ContractError("pair_weight_matrix: invalid edge endpoint");
    groups[{std::min(a, b), std::max(a, b)}].push_back(e);
  }
  std::vector<double> out(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) out[i * m + i] = self_weight;
  for (const auto& [pair, members] : groups) {
    double keep_out = 1.0;
    for (std::size_t e : members) keep_out *= 1.0 - edge_weights[e];
    out[pair.first * m + pair.second] = out[pair.second * m + pair.first] = 1.0 - keep_out;
  }
  return detail::make_result("pair_weight_matrix", {m, m}, std::move(out), {edge_weights},
                             [groups, m](detail::Node& n) {
                               auto& p = *n.parents[0];
                               auto& g = p.ensure_grad();
                               for (const auto& [pair, members] : groups) {
                                 const double up = n.grad[pair.first * m + pair.second] +
                                                   n.grad[pair.second * m + pair.first];
                                 for (std::size_t e : members) {
                                   double others = 1.0;
                                   for (std::size_t f : members)
                                     if (f != e) others *= 1.0 - p.value[f];
                                   g[e] += up * others;
                                 }
                               }
                             });
}

// Inverted dropout: active only when `training`, scaling survivors by 1/(1-rate).
template <class Rng>
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> m(x.size());
  for (double& v : m) v = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mul(x, Tensor(x.shape(), std::move(m)));
}

}  // namespace depx::ops
