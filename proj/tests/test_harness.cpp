#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "depx/harness/pipeline.hpp"

using namespace depx;
using namespace depx::harness;
namespace fs = std::filesystem;

namespace {

const std::string kData = DEPX_DATA_DIR;

struct TempDir {
  fs::path path = fs::temp_directory_path() / ("depx_harness_" + std::to_string(::getpid()));
  TempDir() { fs::create_directories(path); }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& body = "") const {
    const auto p = (path / name).string();
    if (!body.empty()) std::ofstream(p) << body;
    return p;
  }
};

struct LogCapture {
  std::vector<std::string> lines;
  log::Sink previous;
  LogCapture() {
    previous = log::set_sink([this](log::Level, const std::string& m) { lines.push_back(m); });
  }
  ~LogCapture() { log::set_sink(previous); }
  bool contains(const std::string& s) const {
    for (const auto& l : lines)
      if (l.find(s) != std::string::npos) return true;
    return false;
  }
};

std::vector<DatasetRecord> parse(const std::string& text, std::size_t classes = 4) {
  std::istringstream in(text);
  return parse_dataset(in, classes, "mem");
}

RunConfig small_run() {
  RunConfig c;
  c.seed = 5;
  c.epochs = 2;
  c.dataset = kData + "/posts.jsonl";
  c.triplets = kData + "/toy_triplets.tsv";
  c.lexicon = kData + "/bdi_symptoms.txt";
  return c;
}

std::vector<DatasetRecord> first_per_class(std::size_t per_class) {
  auto all = load_dataset(kData + "/posts.jsonl", 4);
  std::vector<DatasetRecord> out;
  std::map<int, std::size_t> seen;
  for (auto& r : all)
    if (seen[*r.label]++ < per_class) out.push_back(r);
  return out;
}

}  // namespace

TEST(Dataset, ParsesValidLines) {
  const auto r = parse(R"({"id":"a","text":"one.","label":0}
{"id":"b","text":"two.","label":3}

{"id":"c","text":"three."}
)");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[1].label, 3);
  EXPECT_FALSE(r[2].label.has_value());
}

TEST(Dataset, OutOfRangeLabelIsValidationError) {
  EXPECT_THROW(parse(R"({"id":"a","text":"x","label":5})"), ValidationError);
  EXPECT_THROW(parse(R"({"id":"a","text":"x","label":-1})"), ValidationError);
}

TEST(Dataset, BadLineReportsLineNumber) {
  try {
    parse("{\"id\":\"a\",\"text\":\"x\",\"label\":0}\n{oops\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse(R"({"id":"a"})"), ParseError);
  EXPECT_THROW(parse("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}"), ValidationError);
}

TEST(Dataset, BundledFixtureHas64BalancedPosts) {
  const auto r = load_dataset(kData + "/posts.jsonl", 4);
  ASSERT_EQ(r.size(), 64u);
  std::map<int, int> counts;
  for (const auto& x : r) ++counts[*x.label];
  for (int c = 0; c < 4; ++c) EXPECT_EQ(counts[c], 16);
}

TEST(Split, SeededStratifiedAndDisjoint) {
  const auto r = load_dataset(kData + "/posts.jsonl", 4);
  const auto a = stratified_split(r, 9), b = stratified_split(r, 9), c = stratified_split(r, 10);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
  EXPECT_EQ(a.train.size(), 44u);  // round(16 * 0.7) = 11 per class
  EXPECT_EQ(a.val.size(), 8u);     // round(16 * 0.15) = 2 per class
  EXPECT_EQ(a.test.size(), 12u);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  all.insert(a.val.begin(), a.val.end());
  all.insert(a.test.begin(), a.test.end());
  EXPECT_EQ(all.size(), 64u);
  std::map<int, int> test_counts;
  for (std::size_t i : a.test) ++test_counts[*r[i].label];
  for (int cl = 0; cl < 4; ++cl) EXPECT_EQ(test_counts[cl], 3);
}

TEST(Config, JsonAndTomlAgree) {
  TempDir tmp;
  const auto j = tmp.file("c.json", R"({"seed": 3, "lr": 0.01, "blocks": [1, 3], "epochs": 7})");
  const auto t = tmp.file("c.toml", "seed = 3\n[train]\nlr = 0.01\nblocks = [1, 3]\nepochs = 7\n");
  const auto a = load_config(j), b = load_config(t);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.seed, 3u);
  EXPECT_EQ(a.blocks, (std::set<int>{1, 3}));
  EXPECT_TRUE((a.text_blocks() == text::Blocks{true, false, true}));
}

TEST(Config, UnknownKeysAndContrastiveTemperatureWarn) {
  LogCapture cap;
  RunConfig c;
  c.merge({{"contrastive_temperature", 0.5}, {"learning_rate", 0.1}});
  EXPECT_TRUE(cap.contains("contrastive_temperature"));
  EXPECT_TRUE(cap.contains("learning_rate"));
  EXPECT_EQ(c.to_json(), RunConfig{}.to_json());
}

TEST(Config, RangeChecks) {
  RunConfig c;
  c.blocks = {4};
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.dropout = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.top_k = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(RunConfig{}.merge({{"epochs", "many"}}), ConfigError);
  TempDir tmp;
  EXPECT_THROW(load_config(tmp.file("bad.toml", "seed = = 1\n")), ParseError);
}

TEST(Config, DefaultsMatchPublishedSettings) {
  const RunConfig c;
  EXPECT_DOUBLE_EQ(c.lr, 0.000278);
  EXPECT_EQ(c.batch, 4u);
  EXPECT_EQ(c.epochs, 100u);
  EXPECT_DOUBLE_EQ(c.dropout, 0.4);
  EXPECT_EQ(c.hidden, 128u);
  EXPECT_DOUBLE_EQ(c.cosine_threshold, 0.5);
  EXPECT_EQ(c.model_config().text.word_attn_dim, 296u);
  EXPECT_EQ(c.model_config().fused_dim(), 684u);
}

TEST(Pipeline, TrainRequiresSeed) {
  auto cfg = small_run();
  cfg.seed.reset();
  const auto providers = make_providers(cfg);
  EXPECT_THROW(train(cfg, first_per_class(2), resolve_graph(cfg, providers), providers), ConfigError);
}

TEST(Pipeline, TrainingIsReplayableAndCheckpointRoundTrips) {
  TempDir tmp;
  const auto cfg = small_run();
  const auto providers = make_providers(cfg);
  const auto kg = resolve_graph(cfg, providers);
  const auto records = first_per_class(4);
  const auto a = train(cfg, records, kg, providers);
  const auto b = train(cfg, records, kg, providers);
  EXPECT_EQ(a.model.parameters().hash(), b.model.parameters().hash());
  ASSERT_EQ(a.log.size(), 2u);
  EXPECT_EQ(a.log[1].loss, b.log[1].loss);
  EXPECT_EQ(a.log[0].epoch, 1u);

  const auto path = tmp.file("m.ckpt");
  a.save(path);
  const auto lm = load_model(path);
  EXPECT_EQ(lm.model.parameters().hash(), a.model.parameters().hash());
  EXPECT_EQ(lm.kg.to_json(), kg.to_json());
  const auto posts = prepare(records, cfg, providers, a.model.config().text);
  const auto before = evaluate(a.model, kg, pick(posts, split_indices("all", {}, records.size())));
  const auto after = evaluate_checkpoint(lm, records, "all");
  EXPECT_EQ(before.metrics.to_json(), after.metrics.to_json());
}

TEST(Pipeline, CorruptCheckpointsRejected) {
  TempDir tmp;
  EXPECT_THROW(read_checkpoint(tmp.file("junk.ckpt", "not a checkpoint at all")), ValidationError);
  EXPECT_THROW(read_checkpoint(tmp.file("missing.ckpt")), IoError);
  ParameterSet ps;
  ps.add("w", Tensor::vector({1.0, 2.0}));
  const auto p = tmp.file("t.ckpt");
  save_checkpoint(p, {{"format", "x"}}, ps);
  const auto size = fs::file_size(p);
  fs::resize_file(p, size - 4);
  EXPECT_THROW(read_checkpoint(p), ValidationError);
}

TEST(Pipeline, AllBlocksRunEqualsDefaultRun) {
  auto cfg = small_run();
  cfg.epochs = 1;
  const auto providers = make_providers(cfg);
  const auto kg = resolve_graph(cfg, providers);
  const auto records = first_per_class(3);
  auto explicit_blocks = cfg;
  explicit_blocks.blocks = {3, 2, 1};
  EXPECT_EQ(train(cfg, records, kg, providers).model.parameters().hash(),
            train(explicit_blocks, records, kg, providers).model.parameters().hash());
}

TEST(Pipeline, DumpEmbeddingsRowPerPost) {
  TempDir tmp;
  auto cfg = small_run();
  cfg.epochs = 1;
  const auto providers = make_providers(cfg);
  const auto kg = resolve_graph(cfg, providers);
  const auto records = first_per_class(3);
  const auto path = tmp.file("m.ckpt");
  train(cfg, records, kg, providers).save(path);
  const auto lm = load_model(path);
  std::ostringstream a, b;
  EXPECT_EQ(dump_embeddings(lm, records, a), records.size());
  dump_embeddings(lm, records, b);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream rows(a.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(rows, line)) {
    ++n;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t') + 1, 2 + 684);
  }
  EXPECT_EQ(n, records.size());
}

TEST(Pipeline, SingleRunSummaryHasZeroSpread) {
  model::MetricsReport r = model::weighted_metrics({0, 1, 1}, {0, 1, 0});
  const auto s = summarize_runs({r});
  EXPECT_EQ(s["f1"]["stddev"].get<double>(), 0.0);
  EXPECT_EQ(s["f1"]["median"].get<double>(), r.f1);
}

TEST(Pipeline, PerfectToyModelScoresOne) {
  const auto r = model::weighted_metrics({0, 1, 2, 3}, {0, 1, 2, 3});
  EXPECT_EQ(r.f1, 1.0);
}
