#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "depx/numerics/tensor.hpp"

namespace depx {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
};

// Compares reverse-mode gradients of the scalar `f()` with central differences
// (f(p + eps) - f(p - eps)) / (2 eps), coordinate by coordinate over `params`.
// Error per coordinate: |analytic - numeric| / max(1, |analytic|, |numeric|).
template <class F>
GradCheckReport check_gradients_report(F&& f, std::vector<Tensor> params, double eps = 1e-5) {
  for (auto& p : params) p.zero_grad();
  backward(f());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    auto g = std::vector<double>(p.grad().begin(), p.grad().end());
    if (g.size() != p.size()) g.assign(p.size(), 0.0);
    analytic.push_back(std::move(g));
  }
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k].mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + eps;
      const double up = f().item();
      w[i] = saved - eps;
      const double down = f().item();
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.coordinates;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_param = k;
        report.worst_index = i;
      }
    }
  }
  for (auto& p : params) p.zero_grad();
  return report;
}

template <class F>
double check_gradients(F&& f, std::vector<Tensor> params, double eps = 1e-5) {
  return check_gradients_report(std::forward<F>(f), std::move(params), eps).max_relative_error;
}

}  // namespace depx
