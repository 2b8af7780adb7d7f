#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "depx/explain/explainer.hpp"
#include "fixtures.hpp"

using namespace depx;
using namespace depx::explain;

namespace {

text::AttentionOutput uniform_attention(std::size_t n, std::size_t heads, text::PadMask mask = {}) {
  if (mask.empty()) mask.assign(n, true);
  std::size_t live = std::count(mask.begin(), mask.end(), true);
  std::vector<double> w(n * n, 0.0);
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t k = 0; k < n; ++k) w[q * n + k] = mask[k] ? 1.0 / static_cast<double>(live) : 0.0;
  text::AttentionOutput out;
  out.representation = Tensor::zeros({n, 1});
  for (std::size_t h = 0; h < heads; ++h) out.weights.push_back(Tensor({n, n}, w));
  out.mask = mask;
  return out;
}

std::vector<std::size_t> oracle_top_k(const std::vector<double>& s, std::size_t k) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] != s[b] ? s[a] > s[b] : a < b; });
  idx.resize(std::min(k, s.size()));
  return idx;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(RankTokens, SingleTokenHasAllMass) {
  const auto r = rank_tokens(uniform_attention(1, 2), {"alone"});
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].token, "alone");
  EXPECT_DOUBLE_EQ(r[0].mass, 1.0);
}

TEST(RankTokens, SymmetricAttentionKeepsOrder) {
  const auto r = rank_tokens(uniform_attention(2, 3), {"first", "second"});
  EXPECT_EQ(r[0].token, "first");
  EXPECT_EQ(r[1].token, "second");
  EXPECT_DOUBLE_EQ(r[0].mass, 0.5);
  EXPECT_DOUBLE_EQ(r[1].mass, 0.5);
}

TEST(RankTokens, PadsExcludedAndMassesSumToOne) {
  Rng rng(2);
  text::MultiHeadAttention mha(8, 2, rng);
  std::vector<double> x(5 * 8);
  for (double& v : x) v = rng.normal();
  const auto out = mha(Tensor({5, 8}, x), {true, true, true, false, false});
  const auto r = rank_tokens(out, {"a", "b", "c", "", ""});
  ASSERT_EQ(r.size(), 3u);
  double total = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    total += r[i].mass;
    EXPECT_LT(r[i].position, 3u);
    if (i) EXPECT_GE(r[i - 1].mass, r[i].mass);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(EdgeEmbeddings, RowIsHeadThenTailFeature) {
  const auto kg = fixtures::five_node_graph(4);
  const Tensor e = edge_embeddings(kg);
  ASSERT_EQ(e.shape(), (Shape{kg.edge_count(), 8}));
  for (std::size_t r = 0; r < kg.edge_count(); ++r) {
    const auto& edge = kg.edges()[r];
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(e.at(r, c), kg.nodes()[edge.head].feature[c]);
      EXPECT_EQ(e.at(r, 4 + c), kg.nodes()[edge.tail].feature[c]);
    }
  }
}

TEST(EdgeEmbeddings, DefaultWidthIsTwiceFeatureWidth) {
  const auto kg = fixtures::five_node_graph(768);
  EXPECT_EQ(edge_embeddings(kg).cols(), 1536u);
}

TEST(ScoreEdges, ZeroScorerGivesHalfMasks) {
  const auto kg = fixtures::five_node_graph(4);
  const auto s = score_edges(kg, EdgeScorer::zeros(4));
  for (double v : s) EXPECT_EQ(v, 0.0);
  const auto m = ops::sigmoid(Tensor::vector(s)).to_vector();
  for (double v : m) EXPECT_EQ(v, 0.5);
}

TEST(ScoreEdges, DeterministicAndFeatureDriven) {
  auto kg = fixtures::single_informative_edge_graph(4);
  Rng rng(3);
  EdgeScorer scorer(4, rng);
  const auto a = score_edges(kg, scorer);
  EXPECT_EQ(a, score_edges(kg, scorer));
  for (std::size_t e = 2; e < a.size(); ++e) EXPECT_EQ(a[e], a[1]);
}

TEST(ExtractSubgraph, HandExample) {
  const auto s = extract_subgraph({0.9, 0.1, 0.5}, 2);
  EXPECT_EQ(s.edges, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(s.complement, (std::vector<std::size_t>{1}));
}

TEST(ExtractSubgraph, LargeKTakesEverything) {
  const auto s = extract_subgraph({0.3, 0.2}, 10);
  EXPECT_EQ(s.edges.size(), 2u);
  EXPECT_TRUE(s.complement.empty());
  EXPECT_THROW(extract_subgraph({0.1}, 0), ConfigError);
}

TEST(ExtractSubgraph, MatchesFullSortOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform(0, 30));
    std::vector<double> s(n);
    for (double& v : s) v = std::round(rng.normal() * 4) / 4;  // forces ties
    const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform(0, static_cast<double>(n) + 3));
    EXPECT_EQ(extract_subgraph(s, k).edges, oracle_top_k(s, k));
  }
}

TEST(ExtractSubgraph, PartitionsEdges) {
  const auto s = extract_subgraph({0.4, 0.4, 0.1, 0.8, 0.0}, 3);
  std::vector<std::size_t> all = s.edges;
  all.insert(all.end(), s.complement.begin(), s.complement.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(s.edges, (std::vector<std::size_t>{3, 0, 1}));
}

TEST(TrainExplainer, AllOnesMaskStaysAtZeroFidelity) {
  const auto kg = fixtures::five_node_graph(4);
  Rng rng(5);
  graph::GraphEncoder enc({4, 6, 2}, rng);
  EdgeScorer scorer = EdgeScorer::zeros(4);
  scorer.linear.bias.mutable_data()[0] = 60.0;  // sigmoid saturates to 1
  ExplainerOptions opts;
  opts.sparsity = 0.0;
  opts.epochs = 5;
  const auto r = train_explainer(kg, graph_fidelity(kg, enc), scorer, opts);
  EXPECT_EQ(r.initial_loss, 0.0);
  EXPECT_EQ(r.final_loss, 0.0);
}

TEST(TrainExplainer, SingleInformativeEdgeRanksFirst) {
  const auto kg = fixtures::single_informative_edge_graph(8);
  const auto enc = fixtures::zero_bias_encoder(8, 128, 13);

  // Exhaustive single-edge ablation: only edge 0 moves g.
  for (std::size_t e = 0; e < kg.edge_count(); ++e) {
    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < kg.edge_count(); ++k)
      if (k != e) keep.push_back(k);
    const double drift = subgraph_fidelity(kg, enc, keep);
    if (e == 0) EXPECT_GT(drift, 0.0);
    else EXPECT_EQ(drift, 0.0) << e;
  }

  const auto r = train_explainer(kg, graph_fidelity(kg, enc), EdgeScorer::zeros(8));
  EXPECT_LE(r.final_loss, r.initial_loss);
  const auto scores = score_edges(kg, r.scorer);
  EXPECT_EQ(extract_subgraph(scores, 1).edges.front(), 0u);

  const std::size_t k = 2;
  const double top = subgraph_fidelity(kg, enc, extract_subgraph(scores, k).edges);
  std::vector<double> random;
  Rng pick(99);
  for (int i = 0; i < 20; ++i) {
    std::vector<std::size_t> idx(kg.edge_count());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), pick);
    idx.resize(k);
    random.push_back(subgraph_fidelity(kg, enc, idx));
  }
  EXPECT_LE(top, median(random));
}

TEST(TrainExplainer, DoesNotTouchModelParameters) {
  const auto kg = fixtures::five_node_graph(8);
  Rng rng(5);
  graph::GraphEncoder enc({8, 6, 2}, rng);
  ParameterSet ps;
  enc.register_into(ps, "graph");
  const auto before = ps.hash();
  Rng srng(6);
  const auto r = train_explainer(kg, graph_fidelity(kg, enc), EdgeScorer(8, srng), {.epochs = 20});
  EXPECT_EQ(ps.hash(), before);
  EXPECT_LE(r.final_loss, r.initial_loss);
}

TEST(ExplainPost, BundleShapeAndDeterminism) {
  auto cfg = fixtures::tiny_model_config();
  const auto emb = fixtures::embedders_for(cfg);
  const auto kg = fixtures::five_node_graph(8);
  Rng rng(8);
  model::DepressionModel m(cfg, rng);
  const auto post = text::tokenize_post("p1", "I feel tired. Nothing helps anymore!", std::nullopt, 16, 64);
  const auto in = text::embed_post_inputs(post, emb.words, emb.sentences, cfg.text);
  const Tensor g = m.encode_graph(kg);
  Rng srng(1);
  const auto sub = extract_subgraph(score_edges(kg, EdgeScorer(8, srng)), 3).to_json(kg);
  const auto j = explain_post(post, in, m, g, sub).to_json();
  EXPECT_EQ(j, explain_post(post, in, m, g, sub).to_json());
  EXPECT_EQ(j["sentences"].size(), 2u);
  double total = 0.0;
  for (const auto& s : j["sentences"]) {
    total += s["mass"].get<double>();
    double tok = 0.0;
    for (const auto& t : s["tokens"]) tok += t["mass"].get<double>();
    EXPECT_NEAR(tok, 1.0, 1e-6);
  }
  EXPECT_NEAR(total, 1.0, 1e-6);
  EXPECT_EQ(j["subgraph"]["edges"].size(), 3u);
}

TEST(ExplainPost, SingleTokenPostIsTrivial) {
  auto cfg = fixtures::tiny_model_config();
  const auto emb = fixtures::embedders_for(cfg);
  const auto kg = fixtures::five_node_graph(8);
  Rng rng(8);
  model::DepressionModel m(cfg, rng);
  const auto post = text::tokenize_post("p", "tired", std::nullopt, 16, 64);
  const auto in = text::embed_post_inputs(post, emb.words, emb.sentences, cfg.text);
  const auto b = explain_post(post, in, m, m.encode_graph(kg), nlohmann::json::object());
  ASSERT_EQ(b.sentences.size(), 1u);
  EXPECT_DOUBLE_EQ(b.sentences[0].mass, 1.0);
  EXPECT_EQ(b.sentences[0].tokens[0].token, "tired");
  EXPECT_DOUBLE_EQ(b.sentences[0].tokens[0].mass, 1.0);
}
