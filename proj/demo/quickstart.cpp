// End-to-end tour: build the toy knowledge graph, train briefly on the bundled
// posts, evaluate on the test split, then explain two posts.
//
//   ./quickstart [data_dir]

#include <filesystem>
#include <iostream>
#include <string>

#include "depx/harness/pipeline.hpp"

using namespace depx;
using namespace depx::harness;

int main(int argc, char** argv) {
  const std::string data = argc > 1 ? argv[1] : DEPX_DATA_DIR;
  log::set_level(log::Level::kWarn);
  try {
    RunConfig cfg;
    cfg.seed = 7;
    cfg.epochs = 3;
    cfg.triplets = data + "/toy_triplets.tsv";
    cfg.lexicon = data + "/bdi_symptoms.txt";

    const auto providers = make_providers(cfg);
    const auto kg = resolve_graph(cfg, providers);
    std::cout << "graph: " << kg.node_count() << " nodes, " << kg.edge_count() << " edges\n";

    const auto records = load_dataset(data + "/posts.jsonl", cfg.classes);
    auto result = train(cfg, records, kg, providers);
    std::cout << "trained " << result.log.size() << " epochs, best val F1 " << result.best_val_f1 << " (epoch "
              << result.best_epoch << ")\n";

    const auto ckpt = (std::filesystem::temp_directory_path() / "depx_quickstart.ckpt").string();
    result.save(ckpt);
    const auto lm = load_model(ckpt);

    const auto test = evaluate_checkpoint(lm, records, "test");
    std::cout << "test metrics: " << test.metrics.to_json().dump() << "\n";

    const std::vector<DatasetRecord> few(records.begin(), records.begin() + 2);
    auto opts = cfg.explainer_options();
    opts.epochs = 50;
    const auto run = explain_records(lm, few, 3, opts);
    for (const auto& b : run.bundles) std::cout << b.dump(2) << "\n";
    std::filesystem::remove(ckpt);
  } catch (const std::exception& e) {
    std::cerr << "quickstart: " << e.what() << "\n";
    return 1;
  }
}
