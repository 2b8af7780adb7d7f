#include <gtest/gtest.h>

#include "depx/numerics/grad_check.hpp"
#include "fixtures.hpp"

using namespace depx;
using namespace depx::model;

namespace {

struct TwoPosts {
  ModelConfig cfg = fixtures::tiny_model_config();
  fixtures::Embedders emb = fixtures::embedders_for(cfg);
  graph::KnowledgeGraph kg = fixtures::five_node_graph(8);
  std::vector<Example> examples{
      fixtures::example("a", "I cannot sleep. Everything feels heavy and slow.", 2, cfg, emb),
      fixtures::example("b", "Had a good walk today!", 0, cfg, emb)};

  std::vector<const Example*> batch() const { return {&examples[0], &examples[1]}; }
};

}  // namespace

TEST(DepressionModel, FullLossGradientsMatchFiniteDifferences) {
  TwoPosts f;
  Rng rng(21);
  DepressionModel m(f.cfg, rng);
  const auto report =
      check_gradients_report([&] { return m.batch_loss(f.batch(), f.kg); }, m.parameters().tensors(), 1e-5);
  EXPECT_LE(report.max_relative_error, 1e-4) << "param " << report.worst_param << " index " << report.worst_index;
  EXPECT_EQ(report.coordinates, m.parameters().scalar_count());
}

TEST(DepressionModel, FusedWidthIs684ByDefault) { EXPECT_EQ(ModelConfig{}.fused_dim(), 684u); }

TEST(DepressionModel, AllBlocksEqualsDefaultBitForBit) {
  TwoPosts f;
  auto explicit_cfg = f.cfg;
  explicit_cfg.blocks = {true, true, true};
  Rng r1(4), r2(4);
  DepressionModel a(f.cfg, r1), b(explicit_cfg, r2);
  const Tensor ga = a.encode_graph(f.kg), gb = b.encode_graph(f.kg);
  EXPECT_EQ(a.predict(f.examples[0].inputs, ga).probabilities, b.predict(f.examples[0].inputs, gb).probabilities);
  EXPECT_EQ(a.batch_loss(f.batch(), f.kg).item(), b.batch_loss(f.batch(), f.kg).item());
}

TEST(DepressionModel, WordOnlyBlockZeroesSentenceAndPostSlices) {
  TwoPosts f;
  f.cfg.blocks = {true, false, false};
  Rng rng(4);
  DepressionModel m(f.cfg, rng);
  const auto fw = m.forward(f.examples[0].inputs, m.encode_graph(f.kg));
  const auto z = fw.z.to_vector();
  const std::size_t w = f.cfg.text.word_dim, h = f.cfg.text.hidden;
  bool word_nonzero = false;
  for (std::size_t i = 0; i < w; ++i) word_nonzero |= z[i] != 0.0;
  EXPECT_TRUE(word_nonzero);
  for (std::size_t i = w; i < w + 2 * h; ++i) EXPECT_EQ(z[i], 0.0) << i;
}

TEST(DepressionModel, DropoutOnlyWithRng) {
  TwoPosts f;
  f.cfg.dropout = 0.5;
  Rng rng(4);
  DepressionModel m(f.cfg, rng);
  const Tensor g = m.encode_graph(f.kg);
  const auto eval1 = m.forward(f.examples[0].inputs, g).logits.to_vector();
  const auto eval2 = m.forward(f.examples[0].inputs, g).logits.to_vector();
  EXPECT_EQ(eval1, eval2);
  Rng drop(9);
  EXPECT_NE(m.forward(f.examples[0].inputs, g, &drop).logits.to_vector(), eval1);
}

TEST(DepressionModel, ConfigJsonRoundTrip) {
  ModelConfig c;
  c.classes = 3;
  c.blocks = {true, false, true};
  const auto back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(DepressionModel, InvalidConfigsRejected) {
  ModelConfig c;
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.text.heads = 7;
  EXPECT_THROW(c.validate(), ConfigError);
}
