#include <gtest/gtest.h>

#include <cmath>

#include "cseae/nn/grad_check.hpp"
#include "cseae/nn/backbone.hpp"
#include "cseae/nn/tensor.hpp"
#include "oracles.hpp"

using namespace cseae;
using namespace cseae::nn;

namespace {

Tensor make(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor(r, c, std::move(v)); }

/// sum(out * W) for a fixed random W; the gradient check target.
double check(std::vector<Tensor>& leaves, const std::function<Var(Tape&, std::vector<Var>&)>& f,
             std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::optional<Tensor> w;
  std::vector<Tensor*> ptrs;
  for (auto& t : leaves) ptrs.push_back(&t);
  auto builder = [&](Tape& tape) {
    std::vector<Var> v;
    for (auto& t : leaves) v.push_back(tape.watch(t));
    Var out = f(tape, v);
    if (!w) w = oracle::random_tensor(rng, out.rows(), out.cols());
    return sum(tape, mul(tape, out, tape.constant(*w)));
  };
  return grad_check(ptrs, builder).max_relative_error;
}

}  // namespace

TEST(Tensor, ShapeMismatchThrows) {
  EXPECT_THROW(Tensor(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  Tape t;
  Tensor a(2, 3), b(2, 3), c(3, 2);
  EXPECT_THROW(matmul(t, t.watch(a), t.watch(b)), ShapeError);
  EXPECT_THROW(add(t, t.watch(a), t.watch(c)), ShapeError);
}

TEST(Tensor, MatmulValues) {
  Tape t;
  Tensor a = make(2, 2, {1, 2, 3, 4}), b = make(2, 2, {5, 6, 7, 8});
  Var c = matmul(t, t.watch(a), t.watch(b));
  EXPECT_EQ(c->data, (std::vector<double>{19, 22, 43, 50}));
  Var d = matmul_nt(t, t.watch(a), t.watch(b));
  EXPECT_EQ(d->data, (std::vector<double>{17, 23, 39, 53}));
}

TEST(Tensor, SoftmaxMaskedEntriesAreExactlyZero) {
  Tape t;
  Tensor a = make(2, 3, {1, 2, 3, 0, 0, 0});
  Tensor mask = make(2, 3, {0, kNegInf, 0, kNegInf, 0, 0});
  Var s = softmax_rows(t, t.watch(a), &mask);
  EXPECT_EQ(s->at(0, 1), 0.0);
  EXPECT_EQ(s->at(1, 0), 0.0);
  EXPECT_NEAR(s->at(0, 0) + s->at(0, 2), 1.0, 1e-15);
  EXPECT_NEAR(s->at(1, 1), 0.5, 1e-15);
}

TEST(Tensor, LogSoftmaxMatchesDirect) {
  Tape t;
  Tensor a = make(1, 3, {1000.0, 1001.0, 999.0});
  Var l = log_softmax_rows(t, t.watch(a));
  const double lse = 1001.0 + std::log(std::exp(-1.0) + 1.0 + std::exp(-2.0));
  EXPECT_NEAR(l->data[0], 1000.0 - lse, 1e-12);
}

TEST(Tensor, GeluExactErf) {
  Tape t;
  Tensor a = make(1, 3, {-1.0, 0.0, 2.0});
  Var g = gelu(t, t.watch(a));
  EXPECT_NEAR(g->data[0], -0.15865525393145707, 1e-15);
  EXPECT_EQ(g->data[1], 0.0);
  EXPECT_NEAR(g->data[2], 1.9544997361036416, 1e-15);
}

TEST(Tensor, LayerNormZeroMeanUnitVariance) {
  Tape t;
  Tensor a = make(1, 4, {1, 2, 3, 4}), gain(1, 4, 1.0), bias(1, 4, 0.0);
  Var y = layer_norm(t, t.watch(a), t.watch(gain), t.watch(bias));
  double mean = 0, var = 0;
  for (double v : y->data) mean += v / 4;
  for (double v : y->data) var += (v - mean) * (v - mean) / 4;
  EXPECT_NEAR(mean, 0.0, 1e-15);
  EXPECT_NEAR(var, 1.25 / (1.25 + 1e-5), 1e-12);
}

TEST(Tensor, EmbeddingGathersAndAccumulates) {
  Tape t;
  Tensor table = make(3, 2, {1, 2, 3, 4, 5, 6});
  std::vector<int> ids{2, 0, 2};
  Var e = embedding(t, t.watch(table), ids);
  EXPECT_EQ(e->data, (std::vector<double>{5, 6, 1, 2, 5, 6}));
  t.backward(sum(t, e));
  EXPECT_EQ(table.grad, (std::vector<double>{1, 1, 0, 0, 2, 2}));
}

TEST(Tensor, BackwardAccumulatesAcrossTapes) {
  Tensor p = make(1, 1, {3.0});
  for (int i = 0; i < 2; ++i) {
    Tape t;
    Var x = t.watch(p);
    t.backward(mul(t, x, x));
  }
  EXPECT_EQ(p.grad[0], 12.0);
}

TEST(Tensor, NonRecordingTapeComputesValues) {
  Tape t(false);
  Tensor a = make(1, 2, {1, 2});
  Var s = sum(t, scale(t, t.watch(a), 2.0));
  EXPECT_EQ(s->data[0], 6.0);
}

TEST(GradCheck, Primitives) {
  std::mt19937_64 rng(2);
  auto r = [&](std::size_t a, std::size_t b) { return oracle::random_tensor(rng, a, b); };
  {
    std::vector<Tensor> l{r(4, 8), r(8, 3)};
    EXPECT_LE(check(l, [](Tape& t, auto& v) { return matmul(t, v[0], v[1]); }), 1e-6);
  }
  {
    std::vector<Tensor> l{r(4, 8), r(5, 8)};
    EXPECT_LE(check(l, [](Tape& t, auto& v) { return matmul_nt(t, v[0], v[1]); }), 1e-6);
  }
  {
    std::vector<Tensor> l{r(4, 8), r(1, 8)};
    EXPECT_LE(check(l, [](Tape& t, auto& v) { return add_row(t, v[0], v[1]); }), 1e-6);
  }
  {
    std::vector<Tensor> l{r(4, 8)};
    EXPECT_LE(check(l, [](Tape& t, auto& v) { return gelu(t, v[0]); }), 1e-6);
  }
  {
    std::vector<Tensor> l{r(4, 8), r(1, 8), r(1, 8)};
    EXPECT_LE(check(l, [](Tape& t, auto& v) { return layer_norm(t, v[0], v[1], v[2]); }), 1e-6);
  }
  {
    std::vector<Tensor> l{r(4, 8)};
    EXPECT_LE(check(l, [](Tape& t, auto& v) { return log_softmax_rows(t, v[0]); }), 1e-6);
  }
  {
    static const Tensor mask = additive_mask(4, 4, [](std::size_t i, std::size_t j) { return (i + j) % 3 != 0; });
    std::vector<Tensor> l{r(4, 4)};
    EXPECT_LE(check(l, [](Tape& t, auto& v) { return softmax_rows(t, v[0], &mask, 0.3); }), 1e-6);
  }
  {
    std::vector<Tensor> l{r(3, 8), r(3, 2)};
    EXPECT_LE(check(l, [](Tape& t, auto& v) {
      return concat_cols(t, {slice_cols(t, v[0], 1, 4), v[1], slice_rows(t, v[0], 0, 3)});
    }), 1e-6);
  }
}

TEST(GradCheck, DetectsWrongGradient) {
  std::mt19937_64 rng(3);
  std::vector<Tensor> leaves{oracle::random_tensor(rng, 3, 4)};
  std::vector<Tensor*> ptrs{&leaves[0]};
  GradCheckOptions opt;
  opt.tamper = [](std::size_t, std::vector<double>& g) { g[0] += 0.1; };
  auto res = grad_check(ptrs, [&](Tape& t) { return sum(t, gelu(t, t.watch(leaves[0]))); }, opt);
  EXPECT_GT(res.max_relative_error, 1e-2);
  EXPECT_EQ(res.worst_index, 0u);
}

TEST(GradCheck, RejectsBadEpsilon) {
  Tensor a(1, 1, 1.0);
  std::vector<Tensor*> ptrs{&a};
  GradCheckOptions opt;
  opt.epsilon = 0.5;
  EXPECT_THROW(grad_check(ptrs, [&](Tape& t) { return sum(t, t.watch(a)); }, opt), std::invalid_argument);
}

TEST(GradCheck, FourthOrderStencilIsCloser) {
  Tensor a = make(1, 1, {0.7});
  std::vector<Tensor*> ptrs{&a};
  auto f = [&](Tape& t) {
    Var x = t.watch(a);
    return sum(t, gelu(t, mul(t, x, mul(t, x, x))));
  };
  GradCheckOptions two, four;
  two.epsilon = four.epsilon = 1e-2;
  four.fourth_order = true;
  EXPECT_LT(grad_check(ptrs, f, four).max_relative_error, grad_check(ptrs, f, two).max_relative_error);
}
