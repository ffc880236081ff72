#include <gtest/gtest.h>

#include <cstring>

#include "cseae/nn/backbone.hpp"
#include "cseae/nn/grad_check.hpp"
#include "cseae/nn/optimizer.hpp"
#include "oracles.hpp"

using namespace cseae;
using namespace cseae::nn;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.hidden = 8;
  c.layers = 2;
  c.heads = 2;
  c.ffn = 16;
  c.vocab_size = 12;
  c.max_context = 16;
  c.prefix_len = 3;
  c.seed = 5;
  return c;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Config, Validation) {
  ModelConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config();
  c.prefix_len = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ParamStore, NamesAndDuplicates) {
  ParamStore ps;
  std::mt19937_64 rng(1);
  Backbone b(ps, small_config(), rng);
  EXPECT_EQ(ps.name(0), "embed.tokens");
  EXPECT_TRUE(ps.contains("encoder.1.self_attn.q.weight"));
  EXPECT_TRUE(ps.contains("decoder.0.cross_attn.o.bias"));
  EXPECT_TRUE(ps.contains("decoder.ln_final.gain"));
  EXPECT_THROW(ps.create("embed.tokens", 1, 1), std::invalid_argument);
  EXPECT_THROW(ps.get("nope"), std::out_of_range);
}

TEST(Backbone, ShapesAndLimits) {
  ParamStore ps;
  std::mt19937_64 rng(1);
  Backbone b(ps, small_config(), rng);
  Tape t(false);
  std::vector<int> ids{1, 2, 3, 4, 5};
  Var enc = b.encoder_forward(t, ids);
  EXPECT_EQ(enc.rows(), 5u);
  EXPECT_EQ(enc.cols(), 8u);
  std::vector<int> prompt{6, 7};
  Var dec = b.decoder_forward(t, b.embed(t, prompt), enc);
  EXPECT_EQ(dec.rows(), 2u);
  std::vector<int> long_ids(17, 1);
  EXPECT_THROW(b.encoder_forward(t, long_ids), ShapeError);
  std::vector<int> bad{12};
  EXPECT_THROW(b.embed(t, bad), ShapeError);
}

TEST(Backbone, SeededInitIsDeterministic) {
  ParamStore a, b;
  std::mt19937_64 ra(9), rb(9);
  Backbone ba(a, small_config(), ra), bb(b, small_config(), rb);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_equal(a.at(i).data, b.at(i).data)) << a.name(i);
}

TEST(Attention, PrefixEqualsExplicitConcatenation) {
  std::mt19937_64 rng(4);
  Tensor q = oracle::random_tensor(rng, 3, 8), k = oracle::random_tensor(rng, 3, 8), v = oracle::random_tensor(rng, 3, 8);
  Tensor pk = oracle::random_tensor(rng, 2, 8), pv = oracle::random_tensor(rng, 2, 8);
  Tape t(false);
  PrefixKV p{t.watch(pk), t.watch(pv), nullptr};
  Var with_prefix = attention(t, t.watch(q), t.watch(k), t.watch(v), 2, nullptr, &p);
  Var explicit_cat = attention(t, t.watch(q), concat_rows(t, t.watch(pk), t.watch(k)),
                               concat_rows(t, t.watch(pv), t.watch(v)), 2);
  EXPECT_TRUE(bit_equal(with_prefix->data, explicit_cat->data));
}

TEST(Attention, TraceRowsSumToOneAndMaskedColumnsZero) {
  std::mt19937_64 rng(5);
  Tensor q = oracle::random_tensor(rng, 4, 8), k = oracle::random_tensor(rng, 4, 8);
  Tensor mask = additive_mask(4, 4, [](std::size_t i, std::size_t j) { return j != (i + 1) % 4; });
  Tape t(false);
  AttentionTrace trace;
  attention(t, t.watch(q), t.watch(k), t.watch(k), 4, &mask, nullptr, &trace);
  ASSERT_EQ(trace.weights.size(), 4u);
  for (const auto& w : trace.weights) {
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 4; ++j) s += w.at(i, j);
      EXPECT_NEAR(s, 1.0, 1e-12);
      EXPECT_EQ(w.at(i, (i + 1) % 4), 0.0);
    }
  }
}

TEST(Attention, HeadsMustDivideHidden) {
  Tensor q(2, 6);
  Tape t(false);
  EXPECT_THROW(attention(t, t.watch(q), t.watch(q), t.watch(q), 4), ShapeError);
}

TEST(Backbone, GradientThroughBothStacks) {
  ParamStore ps;
  std::mt19937_64 rng(2);
  ModelConfig cfg = small_config();
  cfg.layers = 1;
  Backbone b(ps, cfg, rng);
  Tensor pk = oracle::random_tensor(rng, 3, 8, 0.5), pv = oracle::random_tensor(rng, 3, 8, 0.5);
  Tensor w = oracle::random_tensor(rng, 2, 8);
  std::vector<int> ids{1, 2, 3, 4}, prompt{5, 6};
  std::vector<Tensor*> params = ps.pointers();
  params.push_back(&pk);
  params.push_back(&pv);
  auto loss = [&](Tape& t) {
    PrefixPack pack{{PrefixKV{t.watch(pk), t.watch(pv), nullptr}}};
    Var enc = b.encoder_forward(t, ids, nullptr, &pack);
    Var dec = b.decoder_forward(t, b.embed(t, prompt), enc, &pack);
    return sum(t, mul(t, dec, t.constant(w)));
  };
  GradCheckOptions opt;
  opt.epsilon = 1e-3;
  opt.fourth_order = true;
  EXPECT_LE(grad_check(params, loss, opt).max_relative_error, 1e-4);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  ParamStore ps;
  Tensor& p = ps.create("p", 1, 2, 1.0);
  p.grad = {0.5, -2.0};
  AdamWOptions o;
  o.lr = 0.1;
  o.weight_decay = 0.0;
  AdamW opt(ps, o);
  opt.step();
  // Bias-corrected first step is lr * sign(g) up to eps.
  EXPECT_NEAR(p.data[0], 0.9, 1e-6);
  EXPECT_NEAR(p.data[1], 1.1, 1e-6);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, ZeroLearningRateLeavesParameters) {
  ParamStore ps;
  Tensor& p = ps.create("p", 1, 2, 1.0);
  p.grad = {0.5, -2.0};
  AdamWOptions o;
  o.lr = 0.0;
  AdamW opt(ps, o);
  opt.step();
  EXPECT_EQ(p.data, (std::vector<double>{1.0, 1.0}));
}

TEST(AdamW, DecoupledDecayWithoutGradient) {
  ParamStore ps;
  Tensor& p = ps.create("p", 1, 1, 2.0);
  AdamWOptions o;
  o.lr = 0.1;
  o.weight_decay = 0.5;
  AdamW opt(ps, o);
  opt.step();
  EXPECT_NEAR(p.data[0], 2.0 - 0.1 * 0.5 * 2.0, 1e-15);
}
