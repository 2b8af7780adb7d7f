#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "depx/explain/explainer.hpp"
#include "depx/log.hpp"
#include "depx/model/model.hpp"

namespace depx::harness {

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::size_t classes = 4;
  double beta = 3.0;
  std::size_t heads = 8;
  std::size_t gat_heads = 2;
  std::size_t hidden = 128;
  double dropout = 0.4;
  double lr = 0.000278;
  std::size_t epochs = 100;
  std::size_t batch = 4;
  std::size_t max_tokens = 64;
  std::size_t max_sentences = 16;
  double cosine_threshold = 0.5;
  std::optional<std::size_t> top_k;
  std::set<int> blocks{1, 2, 3};
  std::size_t repeats = 1;

  // Stop once train accuracy reaches this value (0 disables).
  double stop_at_train_accuracy = 0.0;
  // false: train on every record, no validation or test split.
  bool holdout = true;

  std::uint64_t embedding_seed = 0;
  std::string dataset, triplets, lexicon, graph, word_table, sentence_table;

  std::size_t explainer_epochs = 200;
  double explainer_lr = 0.01;
  double explainer_sparsity = 0.01;
  std::string fidelity = "graph";

  void validate() const {
    if (classes < 2) throw ConfigError("classes must be >= 2");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (heads == 0 || gat_heads == 0 || hidden == 0) throw ConfigError("heads, gat_heads and hidden must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (batch == 0) throw ConfigError("batch must be positive");
    if (max_tokens == 0 || max_sentences == 0) throw ConfigError("max_tokens and max_sentences must be positive");
    if (!(cosine_threshold >= 0.0 && cosine_threshold <= 1.0)) throw ConfigError("cosine_threshold must lie in [0, 1]");
    if (top_k && *top_k == 0) throw ConfigError("top_k must be >= 1");
    if (blocks.empty()) throw ConfigError("blocks must name at least one of 1, 2, 3");
    for (int b : blocks)
      if (b < 1 || b > 3) throw ConfigError("unknown block " + std::to_string(b) + " (expected 1, 2 or 3)");
    if (repeats == 0) throw ConfigError("repeats must be >= 1");
    if (fidelity != "graph" && fidelity != "logits") throw ConfigError("fidelity must be \"graph\" or \"logits\"");
  }

  text::Blocks text_blocks() const { return {blocks.contains(1), blocks.contains(2), blocks.contains(3)}; }

  model::ModelConfig model_config() const {
    model::ModelConfig m;
    m.text.heads = heads;
    m.text.hidden = hidden;
    m.graph.hidden = hidden;
    m.graph.gat_heads = gat_heads;
    m.head_hidden = hidden;
    m.classes = classes;
    m.beta = beta;
    m.dropout = dropout;
    m.blocks = text_blocks();
    // Keep the word attention width divisible by the head count.
    m.text.word_attn_dim = m.text.word_dim - m.text.word_dim % heads;
    m.validate();
    return m;
  }

  explain::ExplainerOptions explainer_options() const {
    explain::ExplainerOptions o;
    o.epochs = explainer_epochs;
    o.lr = explainer_lr;
    o.sparsity = explainer_sparsity;
    o.fidelity = fidelity == "logits" ? explain::Fidelity::kLogits : explain::Fidelity::kGraph;
    return o;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"classes", classes},
                     {"beta", beta},
                     {"heads", heads},
                     {"gat_heads", gat_heads},
                     {"hidden", hidden},
                     {"dropout", dropout},
                     {"lr", lr},
                     {"epochs", epochs},
                     {"batch", batch},
                     {"max_tokens", max_tokens},
                     {"max_sentences", max_sentences},
                     {"cosine_threshold", cosine_threshold},
                     {"blocks", blocks},
                     {"repeats", repeats},
                     {"stop_at_train_accuracy", stop_at_train_accuracy},
                     {"holdout", holdout},
                     {"embedding_seed", embedding_seed},
                     {"dataset", dataset},
                     {"triplets", triplets},
                     {"lexicon", lexicon},
                     {"graph", graph},
                     {"word_table", word_table},
                     {"sentence_table", sentence_table},
                     {"explainer_epochs", explainer_epochs},
                     {"explainer_lr", explainer_lr},
                     {"explainer_sparsity", explainer_sparsity},
                     {"fidelity", fidelity}};
    j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
    j["top_k"] = top_k ? nlohmann::json(*top_k) : nlohmann::json(nullptr);
    return j;
  }

  // Overlays keys from `j`; unknown keys are warned about and ignored.
  void merge(const nlohmann::json& j, const std::string& source = "<config>") {
    if (!j.is_object()) throw ConfigError(source + ": configuration must be an object");
    try {
      for (const auto& [key, v] : j.items()) {
        if (v.is_null()) continue;
        if (key == "seed") seed = v.get<std::uint64_t>();
        else if (key == "classes") classes = v.get<std::size_t>();
        else if (key == "beta") beta = v.get<double>();
        else if (key == "heads") heads = v.get<std::size_t>();
        else if (key == "gat_heads") gat_heads = v.get<std::size_t>();
        else if (key == "hidden") hidden = v.get<std::size_t>();
        else if (key == "dropout") dropout = v.get<double>();
        else if (key == "lr") lr = v.get<double>();
        else if (key == "epochs") epochs = v.get<std::size_t>();
        else if (key == "batch") batch = v.get<std::size_t>();
        else if (key == "max_tokens") max_tokens = v.get<std::size_t>();
        else if (key == "max_sentences") max_sentences = v.get<std::size_t>();
        else if (key == "cosine_threshold") cosine_threshold = v.get<double>();
        else if (key == "top_k") top_k = v.get<std::size_t>();
        else if (key == "blocks") blocks = v.get<std::set<int>>();
        else if (key == "repeats") repeats = v.get<std::size_t>();
        else if (key == "stop_at_train_accuracy") stop_at_train_accuracy = v.get<double>();
        else if (key == "holdout") holdout = v.get<bool>();
        else if (key == "embedding_seed") embedding_seed = v.get<std::uint64_t>();
        else if (key == "dataset") dataset = v.get<std::string>();
        else if (key == "triplets") triplets = v.get<std::string>();
        else if (key == "lexicon") lexicon = v.get<std::string>();
        else if (key == "graph") graph = v.get<std::string>();
        else if (key == "word_table") word_table = v.get<std::string>();
        else if (key == "sentence_table") sentence_table = v.get<std::string>();
        else if (key == "explainer_epochs") explainer_epochs = v.get<std::size_t>();
        else if (key == "explainer_lr") explainer_lr = v.get<double>();
        else if (key == "explainer_sparsity") explainer_sparsity = v.get<double>();
        else if (key == "fidelity") fidelity = v.get<std::string>();
        else if (key == "contrastive_temperature") {
          log::warn(source + ": contrastive_temperature is accepted but has no effect (no contrastive term is defined)");
        } else {
          log::warn(source + ": unknown key \"" + key + "\" ignored");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(source + ": " + e.what());
    }
  }
};

inline nlohmann::json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (const auto* a = node.as_array()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  throw ConfigError("unsupported TOML value type");
}

// JSON when the file name ends in .json, TOML otherwise. Tables are flattened
// one level, so `[train] lr = 0.1` and `lr = 0.1` are equivalent.
inline nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    try {
      j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path, 0, e.what());
    }
  } else {
    try {
      j = toml_to_json(toml::parse(ss.str(), path));
    } catch (const toml::parse_error& e) {
      throw ParseError(path, static_cast<std::size_t>(e.source().begin.line), std::string(e.description()));
    }
  }
  if (!j.is_object()) throw ConfigError(path + ": configuration must be an object");
  nlohmann::json flat = nlohmann::json::object();
  for (const auto& [k, v] : j.items()) {
    if (v.is_object()) {
      for (const auto& [k2, v2] : v.items()) flat[k2] = v2;
    } else {
      flat[k] = v;
    }
  }
  return flat;
}

inline RunConfig load_config(const std::string& path) {
  RunConfig c;
  c.merge(read_config_file(path), path);
  return c;
}

}  // namespace depx::harness
