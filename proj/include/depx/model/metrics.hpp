#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depx/errors.hpp"
#include "depx/log.hpp"

namespace depx::model {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  std::size_t predicted = 0;
};

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f1"] = f1;
    j["accuracy"] = accuracy;
    auto& pc = j["per_class"] = nlohmann::json::array();
    for (std::size_t c = 0; c < per_class.size(); ++c) {
      const auto& m = per_class[c];
      pc.push_back({{"class", c}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}});
    }
    j["confusion"] = confusion;
    return j;
  }
};

// Support-weighted precision, recall and F1 over `classes` classes.
// A class never predicted gets precision 0; a class absent from `gold` has
// zero weight.
inline MetricsReport weighted_metrics(const std::vector<int>& gold, const std::vector<int>& predicted,
                                      std::size_t classes = 0) {
  if (gold.size() != predicted.size()) {
    throw ContractError("weighted_metrics: " + std::to_string(gold.size()) + " gold labels vs " +
                        std::to_string(predicted.size()) + " predictions");
  }
  if (gold.empty()) throw ContractError("weighted_metrics: no samples");
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || predicted[i] < 0) throw ContractError("weighted_metrics: negative class index");
    classes = std::max({classes, static_cast<std::size_t>(gold[i]) + 1, static_cast<std::size_t>(predicted[i]) + 1});
  }
  MetricsReport r;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++r.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(predicted[i])];
    correct += gold[i] == predicted[i];
  }
  const double n = static_cast<double>(gold.size());
  r.accuracy = static_cast<double>(correct) / n;
  r.per_class.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    auto& m = r.per_class[c];
    const std::size_t tp = r.confusion[c][c];
    for (std::size_t k = 0; k < classes; ++k) {
      m.support += r.confusion[c][k];
      m.predicted += r.confusion[k][c];
    }
    if (m.predicted == 0) {
      if (m.support > 0) log::debug("class " + std::to_string(c) + " was never predicted; its precision is 0");
    } else {
      m.precision = static_cast<double>(tp) / static_cast<double>(m.predicted);
    }
    if (m.support > 0) m.recall = static_cast<double>(tp) / static_cast<double>(m.support);
    if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    const double w = static_cast<double>(m.support) / n;
    r.precision += w * m.precision;
    r.recall += w * m.recall;
    r.f1 += w * m.f1;
  }
  return r;
}

struct Summary {
  double median = 0.0;
  double stddev = 0.0;
};

// Median and population standard deviation (0 for a single value).
inline Summary summarize(std::vector<double> values) {
  if (values.empty()) throw ContractError("summarize: no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  Summary s;
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  s.stddev = std::sqrt(var / static_cast<double>(n));
  return s;
}

}  // namespace depx::model
