#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depx/embedding/providers.hpp"
#include "depx/explain/explainer.hpp"
#include "depx/graph/knowledge_graph.hpp"
#include "depx/harness/checkpoint.hpp"
#include "depx/harness/config.hpp"
#include "depx/harness/dataset.hpp"
#include "depx/log.hpp"
#include "depx/model/metrics.hpp"
#include "depx/model/model.hpp"
#include "depx/numerics/adam.hpp"
#include "depx/text/tokenize.hpp"

namespace depx::harness {

struct Providers {
  embedding::WordEmbedder words;
  embedding::SentenceEmbedder sentences;
};

inline Providers make_providers(const RunConfig& cfg) {
  auto words = cfg.word_table.empty()
                   ? embedding::WordEmbedder::synthetic(cfg.embedding_seed)
                   : embedding::WordEmbedder::from_table(embedding::EmbeddingTable::load(cfg.word_table), cfg.embedding_seed);
  auto sentences = cfg.sentence_table.empty()
                       ? embedding::SentenceEmbedder::synthetic(cfg.embedding_seed)
                       : embedding::SentenceEmbedder::from_table(embedding::EmbeddingTable::load(cfg.sentence_table));
  return {std::move(words), std::move(sentences)};
}

inline graph::KnowledgeGraph build_graph(const std::string& triplets, const std::string& lexicon, double threshold,
                                         const embedding::SentenceEmbedder& sentences) {
  const auto rows = graph::ingest_triplets(triplets);
  const auto lex = graph::SymptomLexicon::load(lexicon, sentences);
  auto kg = graph::filter_by_symptoms(rows, lex, sentences, threshold);
  log::info("knowledge graph: " + std::to_string(rows.size()) + " triplets -> " + std::to_string(kg.node_count()) +
            " nodes, " + std::to_string(kg.edge_count()) + " edges");
  return kg;
}

// A prebuilt graph file wins over triplets + lexicon.
inline graph::KnowledgeGraph resolve_graph(const RunConfig& cfg, const Providers& p) {
  if (!cfg.graph.empty()) return graph::KnowledgeGraph::load(cfg.graph);
  if (cfg.triplets.empty() || cfg.lexicon.empty()) {
    throw ConfigError("need either `graph` or both `triplets` and `lexicon`");
  }
  return build_graph(cfg.triplets, cfg.lexicon, cfg.cosine_threshold, p.sentences);
}

struct PreparedPost {
  text::TokenizedPost post;
  model::Example example;
};

inline std::vector<PreparedPost> prepare(const std::vector<DatasetRecord>& records, const RunConfig& cfg,
                                         const Providers& p, const text::TextEncoderConfig& tc) {
  std::vector<PreparedPost> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    PreparedPost pp{text::tokenize_post(r.id, r.text, r.label, cfg.max_sentences, cfg.max_tokens), {}};
    pp.example.inputs = text::embed_post_inputs(pp.post, p.words, p.sentences, tc);
    pp.example.label = r.label.value_or(-1);
    out.push_back(std::move(pp));
  }
  return out;
}

struct Evaluation {
  model::MetricsReport metrics;
  std::vector<int> gold, predicted;
};

inline Evaluation evaluate(const model::DepressionModel& m, const graph::KnowledgeGraph& kg,
                           const std::vector<const model::Example*>& examples) {
  if (examples.empty()) throw ValidationError("nothing to evaluate");
  const Tensor g = m.encode_graph(kg);
  Evaluation e;
  for (const auto* ex : examples) {
    if (ex->label < 0) throw ValidationError("evaluation needs labelled records");
    e.gold.push_back(ex->label);
    e.predicted.push_back(m.predict(ex->inputs, g).predicted_rank);
  }
  const std::size_t classes = m.config().classes;
  for (std::size_t c = 0; c < classes; ++c) {
    if (std::find(e.gold.begin(), e.gold.end(), static_cast<int>(c)) == e.gold.end()) {
      log::warn("class " + std::to_string(c) + " is absent from the gold labels");
    }
  }
  e.metrics = model::weighted_metrics(e.gold, e.predicted, classes);
  return e;
}

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_f1 = 0.0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch}, {"loss", loss}, {"train_accuracy", train_accuracy}, {"val_f1", val_f1}};
  }
};

struct TrainResult {
  RunConfig config;
  model::DepressionModel model;
  graph::KnowledgeGraph kg;
  Split split;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_f1 = -1.0;

  nlohmann::json manifest() const {
    return {{"format", "depx-checkpoint"},
            {"run_config", config.to_json()},
            {"model_config", model.config().to_json()},
            {"labels", model.scale().labels},
            {"graph", kg.to_json()},
            {"training", {{"best_epoch", best_epoch}, {"best_val_f1", best_val_f1}, {"epochs_run", log.size()}}}};
  }

  void save(const std::string& path) const { save_checkpoint(path, manifest(), model.parameters()); }
};

inline std::vector<const model::Example*> pick(const std::vector<PreparedPost>& posts,
                                               const std::vector<std::size_t>& idx) {
  std::vector<const model::Example*> out;
  for (std::size_t i : idx) out.push_back(&posts[i].example);
  return out;
}

inline std::vector<std::size_t> split_indices(const std::string& which, const Split& s, std::size_t n) {
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  if (which == "all") {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  throw ConfigError("unknown split \"" + which + "\" (expected train, val, test or all)");
}

// Adam over soft-label cross-entropy; keeps the parameters of the epoch with
// the best validation weighted F1 (train F1 when the validation split is empty).
inline TrainResult train(const RunConfig& cfg, const std::vector<DatasetRecord>& records,
                         const graph::KnowledgeGraph& kg, const Providers& providers,
                         std::ostream* epoch_log = nullptr) {
  cfg.validate();
  if (!cfg.seed) throw ConfigError("training requires an explicit seed");
  const std::uint64_t seed = *cfg.seed;
  TrainResult r;
  r.config = cfg;
  r.kg = kg;
  Rng init(derive_seed(seed, "model"));
  r.model = model::DepressionModel(cfg.model_config(), init);
  const auto posts = prepare(records, cfg, providers, r.model.config().text);
  r.split = cfg.holdout ? stratified_split(records, seed) : Split{split_indices("all", {}, records.size()), {}, {}};
  if (r.split.train.empty()) throw ValidationError("training split is empty");
  const auto train_set = pick(posts, r.split.train);
  const auto val_set = r.split.val.empty() ? train_set : pick(posts, r.split.val);

  Adam adam(r.model.parameters().tensors(), {cfg.lr});
  Rng shuffle(derive_seed(seed, "shuffle"));
  Rng dropout(derive_seed(seed, "dropout"));
  ParameterSet best = r.model.parameters().snapshot();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      std::vector<const model::Example*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch); ++i) batch.push_back(train_set[order[i]]);
      Tensor loss;
      try {
        loss = r.model.batch_loss(batch, kg, cfg.dropout > 0.0 ? &dropout : nullptr);
        adam.zero_grad();
        backward(loss);
        adam.step();
      } catch (const NumericError& e) {
        throw TrainingError("non-finite values at epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(b) + " (lr " + std::to_string(cfg.lr) + "): " + e.what());
      }
      total += loss.item() * static_cast<double>(batch.size());
    }
    EpochLog e;
    e.epoch = epoch;
    e.loss = total / static_cast<double>(order.size());
    if (!std::isfinite(e.loss)) throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
    e.train_accuracy = evaluate(r.model, kg, train_set).metrics.accuracy;
    e.val_f1 = evaluate(r.model, kg, val_set).metrics.f1;
    r.log.push_back(e);
    if (epoch_log) *epoch_log << e.to_json().dump() << '\n';
    log::debug("epoch " + std::to_string(epoch) + " loss " + std::to_string(e.loss) + " val_f1 " +
               std::to_string(e.val_f1));
    if (e.val_f1 > r.best_val_f1) {
      r.best_val_f1 = e.val_f1;
      r.best_epoch = epoch;
      best = r.model.parameters().snapshot();
    }
    if (cfg.stop_at_train_accuracy > 0.0 && e.train_accuracy >= cfg.stop_at_train_accuracy) break;
  }
  r.model.parameters().copy_values_from(best);
  return r;
}

struct LoadedModel {
  RunConfig config;
  model::DepressionModel model;
  graph::KnowledgeGraph kg;
  nlohmann::json manifest;
};

inline LoadedModel load_model(const std::string& path) {
  const auto ck = read_checkpoint(path);
  LoadedModel lm;
  lm.manifest = ck.manifest;
  try {
    lm.config.merge(ck.manifest.at("run_config"), path);
    const auto mc = model::ModelConfig::from_json(ck.manifest.at("model_config"));
    if (ck.manifest.contains("config_hash") &&
        ck.manifest["config_hash"].get<std::uint64_t>() != json_hash(ck.manifest["model_config"])) {
      throw ValidationError(path + ": model config hash mismatch");
    }
    Rng unused(0);
    lm.model = model::DepressionModel(mc, unused);
    lm.kg = graph::KnowledgeGraph::from_json(ck.manifest.at("graph"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": bad manifest: " + e.what());
  }
  restore_parameters(ck, lm.model.parameters());
  return lm;
}

// Metrics of one checkpoint on a split of its dataset; the split is recomputed
// from the training seed.
inline Evaluation evaluate_checkpoint(const LoadedModel& lm, const std::vector<DatasetRecord>& records,
                                      const std::string& which) {
  const auto providers = make_providers(lm.config);
  const auto posts = prepare(records, lm.config, providers, lm.model.config().text);
  const auto split =
      which == "all" || !lm.config.holdout ? Split{} : stratified_split(records, lm.config.seed.value_or(0));
  return evaluate(lm.model, lm.kg, pick(posts, split_indices(which, split, records.size())));
}

inline nlohmann::json summarize_runs(const std::vector<model::MetricsReport>& runs) {
  nlohmann::json j;
  j["repeats"] = runs.size();
  for (const char* key : {"precision", "recall", "f1", "accuracy"}) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.to_json()[key].get<double>());
    const auto s = model::summarize(v);
    j[key] = {{"median", s.median}, {"stddev", s.stddev}};
  }
  j["runs"] = nlohmann::json::array();
  for (const auto& r : runs) j["runs"].push_back(r.to_json());
  return j;
}

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// id <TAB> label <TAB> z_1 ... z_684
inline std::size_t dump_embeddings(const LoadedModel& lm, const std::vector<DatasetRecord>& records, std::ostream& out) {
  const auto providers = make_providers(lm.config);
  const auto posts = prepare(records, lm.config, providers, lm.model.config().text);
  const Tensor g = lm.model.encode_graph(lm.kg);
  for (const auto& p : posts) {
    out << p.post.id << '\t' << (p.post.label ? std::to_string(*p.post.label) : std::string{});
    for (double x : lm.model.predict(p.example.inputs, g).fused) out << '\t' << format_double(x);
    out << '\n';
  }
  return posts.size();
}

struct ExplanationRun {
  explain::ExplainerResult explainer;
  explain::Subgraph subgraph;
  std::vector<nlohmann::json> bundles;
};

// Trains the edge scorer against the frozen model, extracts the top-k
// subgraph and attaches it to one explanation per post.
inline ExplanationRun explain_records(const LoadedModel& lm, const std::vector<DatasetRecord>& records,
                                      std::size_t top_k, const explain::ExplainerOptions& opts) {
  const auto providers = make_providers(lm.config);
  const auto posts = prepare(records, lm.config, providers, lm.model.config().text);
  std::vector<text::PostInputs> inputs;
  for (const auto& p : posts) inputs.push_back(p.example.inputs);
  const auto fidelity = opts.fidelity == explain::Fidelity::kLogits
                            ? explain::logit_fidelity(lm.kg, lm.model, inputs)
                            : explain::graph_fidelity(lm.kg, lm.model.graph_encoder());
  ExplanationRun run;
  run.explainer.scorer = explain::EdgeScorer::zeros(lm.kg.feature_dim());
  if (lm.kg.edge_count() > 0) {
    run.explainer = explain::train_explainer(lm.kg, fidelity, run.explainer.scorer, opts);
  } else {
    log::warn("knowledge graph has no edges; the explanatory subgraph is empty");
  }
  run.subgraph = explain::extract_subgraph(explain::score_edges(lm.kg, run.explainer.scorer), top_k);
  const auto sub = run.subgraph.to_json(lm.kg);
  const Tensor g = lm.model.encode_graph(lm.kg);
  for (const auto& p : posts) run.bundles.push_back(explain::explain_post(p.post, p.example.inputs, lm.model, g, sub).to_json());
  return run;
}

}  // namespace depx::harness
