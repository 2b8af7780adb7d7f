#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "depx/graph/encoder.hpp"
#include "depx/numerics/grad_check.hpp"

using namespace depx;
using namespace depx::graph;

namespace {

const std::string kData = DEPX_DATA_DIR;

KnowledgeGraph random_graph(std::size_t m, std::size_t d, const EdgeList& pairs, Rng& rng) {
  std::vector<GraphNode> nodes;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> f(d);
    for (double& x : f) x = rng.normal();
    nodes.push_back({"n" + std::to_string(i), "s" + std::to_string(i), f});
  }
  std::vector<GraphEdge> edges;
  for (auto [a, b] : pairs) edges.push_back({a, "rel", b});
  return KnowledgeGraph(std::move(nodes), std::move(edges));
}

GraphEncoderConfig tiny() { return {.feature_dim = 6, .hidden = 5, .gat_heads = 2}; }

// Identity weights and zero biases so that non-negative inputs pass unchanged.
void make_identity(GinLayer& layer, std::size_t d) {
  for (auto& ff : layer.mlp) {
    std::vector<double> eye(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
    ff.weight = Tensor({d, d}, eye, true);
    ff.bias = Tensor::zeros({d}, true);
  }
}

}  // namespace

TEST(Triplets, ParseDedupAndArity) {
  std::istringstream in(
      "# comment\n"
      "insomnia\tsymptom_of\tdepression\tsleep loss\tlow mood\n"
      "insomnia\tsymptom_of\tdepression\tsleep loss\tlow mood\n"
      "\n"
      "a\tr\ta\tx\tx\n");
  auto t = parse_triplets(in);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].head, "insomnia");
  EXPECT_EQ(t[0].tail_summary, "low mood");

  std::istringstream bad("ok\tr\tt\ts\tu\nonly\tfour\tfields\there\n");
  try {
    parse_triplets(bad, "t.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("t.tsv:2"), std::string::npos);
  }
  std::istringstream empty_field("h\t\tt\ts\tu\n");
  EXPECT_THROW(parse_triplets(empty_field), ParseError);
}

TEST(Cosine, Examples) {
  const std::vector<double> v{1, 2, 3}, neg{-1, -2, -3};
  EXPECT_NEAR(cosine(v, v), 1.0, 1e-15);
  EXPECT_NEAR(cosine(v, neg), -1.0, 1e-15);
  EXPECT_NEAR(cosine(std::vector<double>{1, 1, 0}, std::vector<double>{1, 0, 0}), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(cosine(std::vector<double>{1, 1, 0}, std::vector<double>{1, 0, 0}), 0.70710678, 1e-8);
  EXPECT_THROW(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), ContractError);
}

TEST(FilterBySymptoms, RetainsByCosine) {
  // File-backed embeddings give exact control over the vectors.
  std::istringstream table(
      "#dim=4\n"
      "same\t1\t0\t0\t0\n"
      "orthogonal\t0\t0\t1\t0\n"
      "diagonal\t1\t1\t0\t0\n"
      "anchor\t1\t0\t0\t0\n");
  auto emb = embedding::SentenceEmbedder::from_table(embedding::EmbeddingTable::parse(table));
  std::istringstream lex_in("sadness\tanchor\n");
  auto lex = SymptomLexicon::parse(lex_in, emb);
  std::vector<Triplet> trips{{"A", "r", "B", "same", "orthogonal"}, {"A", "r", "C", "same", "diagonal"}};
  auto g = filter_by_symptoms(trips, lex, emb, 0.5);
  ASSERT_EQ(g.node_count(), 2u);  // B dropped (cosine 0); C kept (0.7071)
  EXPECT_EQ(g.nodes()[0].entity, "A");
  EXPECT_EQ(g.nodes()[1].entity, "C");
  ASSERT_EQ(g.edge_count(), 1u);
  EXPECT_EQ(g.edges()[0].head, 0u);
  EXPECT_EQ(g.edges()[0].tail, 1u);
  EXPECT_EQ(filter_by_symptoms(trips, lex, emb, 0.8).node_count(), 1u);

  EXPECT_THROW(filter_by_symptoms(trips, SymptomLexicon{}, emb, 0.5), ConfigError);
  EXPECT_THROW(filter_by_symptoms(trips, lex, emb, 1.5), ConfigError);
}

TEST(FilterBySymptoms, BundledFixtureAndInvariants) {
  auto emb = embedding::SentenceEmbedder::synthetic(7);
  auto lex = SymptomLexicon::load(kData + "/bdi_symptoms.txt", emb);
  EXPECT_EQ(lex.size(), 21u);
  auto trips = ingest_triplets(kData + "/toy_triplets.tsv");
  EXPECT_EQ(trips.size(), 19u);
  auto g = filter_by_symptoms(trips, lex, emb, 0.5);
  EXPECT_EQ(g.node_count(), 12u);
  EXPECT_EQ(g.edge_count(), 16u);
  EXPECT_EQ(g.feature_dim(), 768u);

  // Closure: endpoints in range, symmetric adjacency, empty diagonal.
  auto a = g.adjacency();
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    EXPECT_EQ(a[i][i], 0);
    for (std::size_t j = 0; j < g.node_count(); ++j) EXPECT_EQ(a[i][j], a[j][i]);
  }
  for (const auto& e : g.edges()) EXPECT_EQ(a[e.head][e.tail], 1);

  // Row order does not matter.
  auto reversed = trips;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(filter_by_symptoms(reversed, lex, emb, 0.5).to_json(), g.to_json());

  // Monotone in threshold.
  std::size_t previous = SIZE_MAX;
  for (double th : {0.0, 0.1, 0.3, 0.5, 0.9, 1.0}) {
    const auto n = filter_by_symptoms(trips, lex, emb, th).node_count();
    EXPECT_LE(n, previous);
    previous = n;
  }
}

TEST(KnowledgeGraph, JsonRoundTripIsExact) {
  Rng rng(3);
  auto g = random_graph(4, 6, {{0, 1}, {1, 2}, {3, 1}}, rng);
  auto back = KnowledgeGraph::from_json(nlohmann::json::parse(g.to_json().dump()));
  EXPECT_EQ(back.to_json(), g.to_json());
  EXPECT_EQ(back.nodes()[2].feature, g.nodes()[2].feature);
  auto j = g.to_json();
  j["format"] = 2;
  EXPECT_THROW(KnowledgeGraph::from_json(j), ValidationError);
  EXPECT_THROW(KnowledgeGraph(g.nodes(), {{0, "r", 0}}), ValidationError);
  EXPECT_THROW(KnowledgeGraph(g.nodes(), {{0, "r", 9}}), ValidationError);
}

TEST(Gin, DegenerateIdentityCases) {
  const std::size_t d = 3;
  Rng rng(4);
  GinLayer gin(d, d, rng);
  make_identity(gin, d);
  const Tensor h({3, d}, {1, 2, 3, 0.5, 0.25, 4, 7, 0, 1});
  auto isolated = gin({}, h);
  EXPECT_EQ(isolated.to_vector(), h.to_vector());
  auto linked = gin({{0, 1}}, h);
  for (std::size_t j = 0; j < d; ++j) {
    EXPECT_DOUBLE_EQ(linked.at(0, j), h.at(0, j) + h.at(1, j));
    EXPECT_DOUBLE_EQ(linked.at(1, j), h.at(0, j) + h.at(1, j));
    EXPECT_DOUBLE_EQ(linked.at(2, j), h.at(2, j));
  }
  auto zero_mask = gin({{0, 1}}, h, Tensor::zeros({1}));
  EXPECT_EQ(zero_mask.to_vector(), h.to_vector());
  EXPECT_THROW(gin({{0, 1}}, h, Tensor::zeros({2})), ContractError);
}

TEST(Gat, AttentionDistributions) {
  Rng rng(5);
  GatLayer gat(4, 3, rng);
  auto g = random_graph(5, 4, {{0, 1}, {1, 2}, {2, 0}, {3, 1}}, rng);
  auto out = gat(g.edge_pairs(), g.feature_matrix());
  const auto adj = g.adjacency();
  for (const auto& alpha : out.alpha) {
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        if (i != j && !adj[i][j]) EXPECT_EQ(alpha.at(i, j), 0.0);
        s += alpha.at(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    EXPECT_DOUBLE_EQ(alpha.at(4, 4), 1.0);  // isolated node: self-loop only
  }
}

TEST(Gat, IdenticalNeighboursShareAttention) {
  Rng rng(6);
  GatLayer gat(3, 2, rng);
  std::vector<double> row{0.3, -0.2, 0.9};
  std::vector<double> h;
  for (int i = 0; i < 3; ++i) h.insert(h.end(), row.begin(), row.end());
  auto out = gat({{0, 1}, {0, 2}}, Tensor({3, 3}, h));
  for (const auto& alpha : out.alpha)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(alpha.at(0, j), 1.0 / 3.0, 1e-12);
}

TEST(Readout, CoordinateMax) {
  EXPECT_EQ(readout(Tensor::matrix(2, 2, {1, 5, 3, 2})).to_vector(), (std::vector<double>{3, 5}));
  EXPECT_EQ(readout(Tensor::matrix(2, 2, {4, 4, 4, 4})).to_vector(), (std::vector<double>{4, 4}));
  EXPECT_EQ(readout(Tensor::matrix(2, 2, {3, 2, 1, 5})).to_vector(), (std::vector<double>{3, 5}));
  EXPECT_THROW(readout(Tensor::zeros({0, 2})), ContractError);
}

TEST(GraphEncoder, PermutationInvariance) {
  Rng rng(7);
  GraphEncoder enc(tiny(), rng);
  auto g = random_graph(6, 6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}, {5, 2}}, rng);
  const auto base = enc.encode(g).to_vector();
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 shuffler(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(perm.begin(), perm.end(), shuffler);
    const auto other = enc.encode(g.relabeled(perm)).to_vector();
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(base[i], other[i], 1e-9);
  }
}

TEST(GraphEncoder, MaskIdentities) {
  Rng rng(8);
  GraphEncoder enc(tiny(), rng);
  auto g = random_graph(5, 6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, rng);
  EXPECT_EQ(enc.encode(g, Tensor::filled({4}, 1.0)).to_vector(), enc.encode(g).to_vector());
  KnowledgeGraph edgeless(g.nodes(), {});
  const auto a = enc.encode(g, Tensor::zeros({4})).to_vector();
  const auto b = enc.encode(edgeless).to_vector();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

// With identity GIN MLPs and eps = 0 a single node passes both GIN layers
// unchanged (non-negative input), and GAT reduces to ELU(mean_k f Theta_k).
// A zero feature therefore encodes to exactly 0.
TEST(GraphEncoder, SingleNodeCompositionByHand) {
  const std::size_t d = 3;
  Rng rng(9);
  GraphEncoder enc({.feature_dim = d, .hidden = d, .gat_heads = 2}, rng);
  make_identity(enc.gin1, d);
  make_identity(enc.gin2, d);
  KnowledgeGraph zero({{"v", "s", {0.0, 0.0, 0.0}}}, {});
  const auto g0 = enc.encode(zero).to_vector();
  for (double x : g0) EXPECT_EQ(x, 0.0);

  const std::vector<double> f{0.5, 1.0, 2.0};
  KnowledgeGraph single({{"v", "s", f}}, {});
  // GIN layers are identity on non-negative input; GAT with one node has alpha = 1.
  std::vector<double> expected(d, 0.0);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t i = 0; i < d; ++i) expected[j] += f[i] * enc.gat.theta[k].at(i, j) / 2.0;
  for (double& x : expected) x = x > 0 ? x : std::expm1(x);
  const auto g = enc.encode(single).to_vector();
  for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(g[j], expected[j], 1e-12);
}

TEST(GraphEncoder, GradientsMatchFiniteDifferences) {
  Rng rng(10);
  GraphEncoder enc(tiny(), rng);
  auto g = random_graph(5, 6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 1}}, rng);
  ParameterSet params;
  enc.register_into(params, "kg");
  auto mask = Tensor::vector({0.9, 0.4, 0.7, 0.2, 0.6}, true);
  auto target = Tensor::vector({0.1, -0.2, 0.3, 0.0, 0.5});
  auto tensors = params.tensors();
  tensors.push_back(mask);
  const double err = check_gradients([&] { return ops::smooth_l1(enc.encode(g, mask), target); }, tensors);
  EXPECT_LE(err, 1e-4);
}

TEST(GraphEncoder, RejectsEmptyAndMismatchedGraphs) {
  Rng rng(11);
  GraphEncoder enc(tiny(), rng);
  EXPECT_THROW(enc.encode(KnowledgeGraph{}), ContractError);
  KnowledgeGraph wide({{"v", "s", std::vector<double>(7, 1.0)}}, {});
  EXPECT_THROW(enc.encode(wide), ConfigError);
}
