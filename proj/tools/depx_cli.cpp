// depx: build-kg | train | eval | explain | dump-embeddings
//
// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "depx/harness/pipeline.hpp"

namespace {

using namespace depx;
using namespace depx::harness;

struct Overrides {
  std::optional<std::uint64_t> seed, embedding_seed;
  std::optional<std::size_t> classes, epochs, batch, repeats, top_k, explainer_epochs, heads, gat_heads, hidden;
  std::optional<double> beta, dropout, lr, threshold, stop_at, explainer_lr, explainer_sparsity;
  std::optional<std::string> dataset, triplets, lexicon, graph, word_table, sentence_table, fidelity;
  std::vector<int> blocks;
  bool no_holdout = false;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    auto put = [&](const char* k, const auto& v) {
      if (v) j[k] = *v;
    };
    put("seed", seed);
    put("embedding_seed", embedding_seed);
    put("classes", classes);
    put("epochs", epochs);
    put("batch", batch);
    put("repeats", repeats);
    put("top_k", top_k);
    put("explainer_epochs", explainer_epochs);
    put("heads", heads);
    put("gat_heads", gat_heads);
    put("hidden", hidden);
    put("beta", beta);
    put("dropout", dropout);
    put("lr", lr);
    put("cosine_threshold", threshold);
    put("stop_at_train_accuracy", stop_at);
    put("explainer_lr", explainer_lr);
    put("explainer_sparsity", explainer_sparsity);
    put("dataset", dataset);
    put("triplets", triplets);
    put("lexicon", lexicon);
    put("graph", graph);
    put("word_table", word_table);
    put("sentence_table", sentence_table);
    put("fidelity", fidelity);
    if (!blocks.empty()) j["blocks"] = blocks;
    if (no_holdout) j["holdout"] = false;
    return j;
  }
};

void add_provider_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--embedding-seed", o.embedding_seed, "Seed of the synthetic embedding provider");
  cmd->add_option("--word-table", o.word_table, "Word vector TSV (#dim=300)");
  cmd->add_option("--sentence-table", o.sentence_table, "Sentence/post vector TSV (#dim=768)");
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

std::string repeat_path(const std::string& base, std::size_t r) {
  if (r == 0) return base;
  const auto dot = base.find_last_of('.');
  const auto slash = base.find_last_of('/');
  const std::string tag = ".r" + std::to_string(r);
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return base + tag;
  return base.substr(0, dot) + tag + base.substr(dot);
}

int run(int argc, char** argv) {
  CLI::App app{"Depression severity classification with knowledge-graph infusion and explanations"};
  app.require_subcommand(1);
  std::string config_path, log_level = "info";
  app.add_option("--config", config_path, "TOML or JSON configuration; flags override it");
  app.add_option("--log-level", log_level, "debug, info, warn or error")->check(CLI::IsMember({"debug", "info", "warn", "error"}));
  Overrides o;

  auto* build = app.add_subcommand("build-kg", "Filter triplets against the symptom lexicon and write graph JSON");
  std::string out_path;
  build->add_option("--triplets", o.triplets, "Triplet TSV");
  build->add_option("--lexicon", o.lexicon, "Symptom lexicon");
  build->add_option("--threshold", o.threshold, "Cosine threshold (default 0.5)");
  build->add_option("--out", out_path, "Output graph JSON")->required();
  add_provider_flags(build, o);

  auto* train_cmd = app.add_subcommand("train", "Train a model and write the best-validation checkpoint");
  std::string epoch_log_path;
  train_cmd->add_option("--seed", o.seed, "Random seed (required)");
  train_cmd->add_option("--dataset", o.dataset, "JSONL dataset");
  train_cmd->add_option("--graph", o.graph, "Graph JSON from build-kg");
  train_cmd->add_option("--triplets", o.triplets, "Triplet TSV (when no --graph)");
  train_cmd->add_option("--lexicon", o.lexicon, "Symptom lexicon (when no --graph)");
  train_cmd->add_option("--threshold", o.threshold, "Cosine threshold");
  train_cmd->add_option("--classes", o.classes, "Number of severity classes");
  train_cmd->add_option("--beta", o.beta, "Soft-label penalty");
  train_cmd->add_option("--heads", o.heads, "Attention heads");
  train_cmd->add_option("--gat-heads", o.gat_heads, "GAT heads");
  train_cmd->add_option("--hidden", o.hidden, "Hidden width");
  train_cmd->add_option("--dropout", o.dropout, "Dropout on the fused vector");
  train_cmd->add_option("--lr", o.lr, "Adam learning rate");
  train_cmd->add_option("--epochs", o.epochs, "Epochs");
  train_cmd->add_option("--batch", o.batch, "Batch size");
  train_cmd->add_option("--blocks", o.blocks, "Enabled blocks: 1 word, 2 sentence, 3 post");
  train_cmd->add_option("--repeats", o.repeats, "Independent runs with seed, seed+1, ...");
  train_cmd->add_option("--stop-at-train-accuracy", o.stop_at, "Stop early once train accuracy reaches this");
  train_cmd->add_flag("--no-holdout", o.no_holdout, "Train on every record (no validation/test split)");
  train_cmd->add_option("--out", out_path, "Checkpoint path")->required();
  train_cmd->add_option("--log", epoch_log_path, "Per-epoch JSONL log (default: stderr)");
  add_provider_flags(train_cmd, o);

  auto* eval_cmd = app.add_subcommand("eval", "Weighted precision/recall/F1 of one or more checkpoints");
  std::vector<std::string> checkpoints;
  std::string split = "test";
  eval_cmd->add_option("--checkpoint", checkpoints, "Checkpoint(s); several give median and stddev")->required();
  eval_cmd->add_option("--dataset", o.dataset, "JSONL dataset (default: the training dataset)");
  eval_cmd->add_option("--split", split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval_cmd->add_option("--out", out_path, "Metrics JSON (default: stdout)");

  auto* explain_cmd = app.add_subcommand("explain", "Attention rankings and top-k explanatory subgraph per post");
  std::string checkpoint;
  std::string posts_path;
  explain_cmd->add_option("--checkpoint", checkpoint, "Checkpoint")->required();
  explain_cmd->add_option("--post", posts_path, "JSONL posts to explain")->required();
  explain_cmd->add_option("--top-k", o.top_k, "Edges in the explanatory subgraph (required)");
  explain_cmd->add_option("--explainer-epochs", o.explainer_epochs, "Edge-scorer training epochs");
  explain_cmd->add_option("--explainer-lr", o.explainer_lr, "Edge-scorer learning rate");
  explain_cmd->add_option("--sparsity", o.explainer_sparsity, "Mask sparsity weight");
  explain_cmd->add_option("--fidelity", o.fidelity, "graph or logits");
  explain_cmd->add_option("--out", out_path, "Explanation JSONL (default: stdout)");

  auto* dump_cmd = app.add_subcommand("dump-embeddings", "Write fused post vectors as TSV");
  dump_cmd->add_option("--checkpoint", checkpoint, "Checkpoint")->required();
  dump_cmd->add_option("--dataset", o.dataset, "JSONL dataset (default: the training dataset)");
  dump_cmd->add_option("--out", out_path, "TSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  log::set_level(log_level == "debug"  ? log::Level::kDebug
                 : log_level == "warn" ? log::Level::kWarn
                 : log_level == "error" ? log::Level::kError
                                        : log::Level::kInfo);

  RunConfig cfg;
  if (!config_path.empty()) cfg = load_config(config_path);
  const nlohmann::json flags = o.to_json();

  if (build->parsed()) {
    cfg.merge(flags, "flags");
    cfg.validate();
    if (cfg.triplets.empty() || cfg.lexicon.empty()) throw ConfigError("build-kg needs --triplets and --lexicon");
    const auto providers = make_providers(cfg);
    build_graph(cfg.triplets, cfg.lexicon, cfg.cosine_threshold, providers.sentences).save(out_path);
    return 0;
  }

  if (train_cmd->parsed()) {
    cfg.merge(flags, "flags");
    if (!cfg.seed) throw ConfigError("train requires --seed (or `seed` in the config file)");
    cfg.validate();
    if (cfg.dataset.empty()) throw ConfigError("train needs --dataset");
    const auto providers = make_providers(cfg);
    const auto kg = resolve_graph(cfg, providers);
    const auto records = load_dataset(cfg.dataset, cfg.classes);
    std::ofstream epoch_file;
    if (!epoch_log_path.empty()) {
      epoch_file.open(epoch_log_path, std::ios::trunc);
      if (!epoch_file) throw IoError("cannot write " + epoch_log_path);
    }
    std::ostream& epoch_log = epoch_log_path.empty() ? std::cerr : epoch_file;
    nlohmann::json summary{{"runs", nlohmann::json::array()}};
    std::vector<model::MetricsReport> test_runs;
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      RunConfig run_cfg = cfg;
      run_cfg.seed = *cfg.seed + r;
      run_cfg.repeats = 1;
      const auto result = train(run_cfg, records, kg, providers, &epoch_log);
      const std::string path = repeat_path(out_path, r);
      result.save(path);
      nlohmann::json run{{"checkpoint", path},
                         {"seed", *run_cfg.seed},
                         {"best_epoch", result.best_epoch},
                         {"best_val_f1", result.best_val_f1},
                         {"epochs_run", result.log.size()},
                         {"final_train_accuracy", result.log.empty() ? 0.0 : result.log.back().train_accuracy}};
      if (!result.split.test.empty()) {
        const auto posts = prepare(records, run_cfg, providers, result.model.config().text);
        const auto ev = evaluate(result.model, kg, pick(posts, result.split.test));
        run["test"] = ev.metrics.to_json();
        test_runs.push_back(ev.metrics);
      }
      summary["runs"].push_back(run);
    }
    if (!test_runs.empty()) summary["test_summary"] = summarize_runs(test_runs);
    std::cout << summary.dump(2) << '\n';
    return 0;
  }

  if (eval_cmd->parsed()) {
    std::vector<model::MetricsReport> runs;
    for (const auto& path : checkpoints) {
      const auto lm = load_model(path);
      const std::string dataset = o.dataset ? *o.dataset : lm.config.dataset;
      if (dataset.empty()) throw ConfigError("eval needs --dataset");
      const auto records = load_dataset(dataset, lm.model.config().classes);
      runs.push_back(evaluate_checkpoint(lm, records, split).metrics);
    }
    nlohmann::json out = runs.size() == 1 ? runs.front().to_json() : summarize_runs(runs);
    out["split"] = split;
    write_text(out_path, out.dump(2) + "\n");
    return 0;
  }

  if (explain_cmd->parsed()) {
    if (!o.top_k) throw ConfigError("explain requires --top-k");
    const auto lm = load_model(checkpoint);
    RunConfig ecfg = lm.config;
    if (!config_path.empty()) ecfg.merge(read_config_file(config_path), config_path);
    ecfg.merge(flags, "flags");
    ecfg.validate();
    const auto records = load_dataset(posts_path, lm.model.config().classes);
    LoadedModel scoped = lm;
    scoped.config = ecfg;
    const auto run = explain_records(scoped, records, *ecfg.top_k, ecfg.explainer_options());
    std::string text;
    for (const auto& b : run.bundles) text += b.dump() + "\n";
    write_text(out_path, text);
    return 0;
  }

  if (dump_cmd->parsed()) {
    const auto lm = load_model(checkpoint);
    const std::string dataset = o.dataset ? *o.dataset : lm.config.dataset;
    if (dataset.empty()) throw ConfigError("dump-embeddings needs --dataset");
    const auto records = load_dataset(dataset, lm.model.config().classes);
    if (out_path.empty() || out_path == "-") {
      dump_embeddings(lm, records, std::cout);
    } else {
      std::ofstream out(out_path, std::ios::trunc);
      if (!out) throw IoError("cannot write " + out_path);
      dump_embeddings(lm, records, out);
    }
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const depx::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_validation() ? 1 : 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
