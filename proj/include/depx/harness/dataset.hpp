#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depx/errors.hpp"
#include "depx/log.hpp"
#include "depx/numerics/random.hpp"

namespace depx::harness {

struct DatasetRecord {
  std::string id;
  std::string text;
  std::optional<int> label;
};

// One JSON object per line: {"id", "text", "label"?}. Blank lines are skipped.
inline std::vector<DatasetRecord> parse_dataset(std::istream& in, std::size_t classes,
                                                const std::string& source = "<stream>") {
  std::vector<DatasetRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (!j.is_object()) throw ParseError(source, line_no, "expected a JSON object");
    DatasetRecord r;
    try {
      r.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      r.text = j.at("text").get<std::string>();
      if (j.contains("label") && !j.at("label").is_null()) r.label = j.at("label").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (r.label && (*r.label < 0 || *r.label >= static_cast<int>(classes))) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": label " + std::to_string(*r.label) +
                            " outside [0, " + std::to_string(classes) + ")");
    }
    if (!ids.insert(r.id).second) throw ValidationError(source + ":" + std::to_string(line_no) + ": duplicate id " + r.id);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<DatasetRecord> load_dataset(const std::string& path, std::size_t classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path);
  return parse_dataset(in, classes, path);
}

struct Split {
  std::vector<std::size_t> train, val, test;
};

// Per class: seeded shuffle, then the first 70% to train, the next 15% to
// validation, the rest to test (rounded to nearest). Indices come back sorted.
inline Split stratified_split(const std::vector<DatasetRecord>& records, std::uint64_t seed, double train_frac = 0.70,
                              double val_frac = 0.15) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].label) throw ValidationError("record " + records[i].id + " has no label and cannot be split");
    by_class[*records[i].label].push_back(i);
  }
  Split s;
  Rng rng(derive_seed(seed, "split"));
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::llround(n * train_frac));
    const auto n_val = std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(n * val_frac)));
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<long>(n_train));
    s.val.insert(s.val.end(), idx.begin() + static_cast<long>(n_train), idx.begin() + static_cast<long>(n_train + n_val));
    s.test.insert(s.test.end(), idx.begin() + static_cast<long>(n_train + n_val), idx.end());
  }
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

}  // namespace depx::harness
