#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "cseae/metrics.hpp"
#include "oracles.hpp"

using namespace cseae;

namespace {

Corpus hand_case() {
  AnnotatedDocument ad;
  ad.doc.doc_id = "m";
  ad.doc.tokens = {"a", "b", "c", "d", "e", "f"};
  ad.doc.sentences = {{0, 3}, {3, 6}};
  ad.events.push_back({"Attack", {1, 1}, 1, {{"Attacker", {0, 0}, {}}, {"Target", {4, 5}, {}}}});
  return {ad};
}

Corpus fixture() {
  Corpus c = load_corpus(oracle::fixture("overfit.jsonl"));
  Corpus f = load_corpus(oracle::fixture("multi_event.jsonl"));
  c.insert(c.end(), f.begin(), f.end());
  return c;
}

}  // namespace

TEST(Prf, Formula) {
  PrfScore s{2, 3, 1};
  EXPECT_DOUBLE_EQ(s.precision(), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.recall(), 0.5);
  EXPECT_NEAR(s.f1(), 0.4, 1e-15);
  PrfScore z{3, 2, 0};
  EXPECT_EQ(z.f1(), 0.0);
  PrfScore empty;
  EXPECT_EQ(empty.precision(), 0.0);
}

TEST(Score, HandCase) {
  std::vector<Prediction> preds{{"m", 0, "Attacker", {0, 0}, "a"},
                                {"m", 0, "Target", {3, 3}, "d"},
                                {"m", 0, "Place", {2, 2}, "c"}};
  EvalReport r = score(hand_case(), preds);
  EXPECT_EQ(r.arg_c.gold, 2u);
  EXPECT_EQ(r.arg_c.predicted, 3u);
  EXPECT_EQ(r.arg_c.matched, 1u);
  EXPECT_NEAR(r.arg_c.f1(), 0.4, 1e-15);
}

TEST(Score, ArgIIgnoresRole) {
  std::vector<Prediction> preds{{"m", 0, "Target", {0, 0}, "a"}};
  EvalReport r = score(hand_case(), preds);
  EXPECT_EQ(r.arg_i.matched, 1u);
  EXPECT_EQ(r.arg_c.matched, 0u);
}

TEST(Score, WrongEventDoesNotCount) {
  Corpus g = hand_case();
  g[0].events.push_back({"Die", {2, 2}, 2, {}});
  std::vector<Prediction> preds{{"m", 1, "Attacker", {0, 0}, "a"}};
  EvalReport r = score(g, preds);
  EXPECT_EQ(r.arg_i.matched, 0u);
}

TEST(Score, GoldAgainstItselfIsPerfect) {
  Corpus g = fixture();
  EvalReport r = score(g, gold_as_predictions(g));
  EXPECT_EQ(r.arg_i.f1(), 1.0);
  EXPECT_EQ(r.arg_c.f1(), 1.0);
}

TEST(Score, DuplicateGoldCountedWithMultiplicity) {
  Corpus g = hand_case();
  g[0].events[0].arguments.push_back({"Attacker", {0, 0}, {}});
  std::vector<Prediction> one{{"m", 0, "Attacker", {0, 0}, "a"}};
  EvalReport r = score(g, one);
  EXPECT_EQ(r.arg_c.gold, 3u);
  EXPECT_EQ(r.arg_c.matched, 1u);
  auto two = one;
  two.push_back(one[0]);
  EXPECT_EQ(score(g, two).arg_c.matched, 2u);
}

TEST(Score, DanglingReferenceIsDataError) {
  std::vector<Prediction> bad_doc{{"zz", 0, "Attacker", {0, 0}, ""}};
  std::vector<Prediction> bad_event{{"m", 4, "Attacker", {0, 0}, ""}};
  EXPECT_THROW(score(hand_case(), bad_doc), DataError);
  EXPECT_THROW(score(hand_case(), bad_event), DataError);
}

TEST(Score, PermutationInvariantAndRecallMonotone) {
  Corpus g = fixture();
  auto preds = gold_as_predictions(g);
  for (std::size_t i = 0; i < preds.size(); i += 2) preds[i].span.start = preds[i].span.end;
  std::mt19937_64 rng(2);
  EvalReport base = score(g, preds);
  for (int t = 0; t < 10; ++t) {
    std::shuffle(preds.begin(), preds.end(), rng);
    EvalReport r = score(g, preds);
    EXPECT_EQ(r.arg_c.matched, base.arg_c.matched);
    EXPECT_EQ(r.arg_i.matched, base.arg_i.matched);
  }
  auto all = gold_as_predictions(g);
  double recall = 0.0;
  std::vector<Prediction> growing;
  for (const auto& p : all) {
    growing.push_back(p);
    const double r = score(g, growing).arg_c.recall();
    EXPECT_GE(r, recall);
    recall = r;
  }
}

TEST(Buckets, SumToOverall) {
  Corpus g = fixture();
  auto preds = gold_as_predictions(g);
  for (std::size_t i = 0; i < preds.size(); i += 3) preds[i].role = "Instrument";
  EvalReport overall = score(g, preds);
  for (auto b : {Bucketing::kOverlap, Bucketing::kDistance, Bucketing::kSameSentence}) {
    std::size_t gold = 0, pred = 0, matched = 0;
    for (const auto& [label, r] : bucket_report(g, preds, b)) {
      gold += r.arg_c.gold;
      pred += r.arg_c.predicted;
      matched += r.arg_c.matched;
    }
    EXPECT_EQ(gold, overall.arg_c.gold);
    EXPECT_EQ(pred, overall.arg_c.predicted);
    EXPECT_EQ(matched, overall.arg_c.matched);
  }
}

TEST(Buckets, SameSentenceLabels) {
  Corpus g = load_corpus(oracle::fixture("overfit.jsonl"));
  auto rep = bucket_report(g, gold_as_predictions(g), Bucketing::kSameSentence);
  ASSERT_TRUE(rep.count(kCrossSentenceBucket));
  // Four cross-sentence roles, each with one argument.
  EXPECT_EQ(rep.at(kCrossSentenceBucket).arg_c.gold, 4u);
  EXPECT_EQ(rep.at(kSameSentenceBucket).arg_c.gold, 31u);
}

TEST(Buckets, PredictionsForRolesWithoutGold) {
  std::vector<Prediction> preds{{"m", 0, "Place", {2, 2}, "c"}};
  auto rep = bucket_report(hand_case(), preds, Bucketing::kDistance);
  EXPECT_EQ(rep.at(kNoGoldBucket).arg_c.predicted, 1u);
  EXPECT_EQ(rep.at(kNoGoldBucket).arg_c.gold, 0u);
}

TEST(DistanceBins, Labels) {
  DistanceBins b;
  EXPECT_EQ(b.label(b.index(-50)), "d<=-21");
  EXPECT_EQ(b.label(b.index(-20)), "-20..-11");
  EXPECT_EQ(b.label(b.index(0)), "d=0");
  EXPECT_EQ(b.label(b.index(5)), "1..10");
  EXPECT_EQ(b.label(b.index(21)), "d>=21");
}

TEST(Predictions, JsonlRoundTrip) {
  auto preds = gold_as_predictions(fixture());
  std::stringstream ss;
  write_predictions(ss, preds);
  auto back = parse_predictions(ss);
  ASSERT_EQ(back.size(), preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(back[i].doc_id, preds[i].doc_id);
    EXPECT_EQ(back[i].span, preds[i].span);
    EXPECT_EQ(back[i].text, preds[i].text);
  }
  std::stringstream bad("{\"doc_id\": 1}\n");
  EXPECT_THROW(parse_predictions(bad), DataError);
}

TEST(Report, JsonFieldsAndTable) {
  Corpus g = fixture();
  EvalReport r = score_with_buckets(g, gold_as_predictions(g), Bucketing::kOverlap);
  auto j = to_json(r);
  for (const char* k : {"arg_i", "arg_c", "counts", "buckets"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_TRUE(j["buckets"].contains("overlap"));
  EXPECT_NE(render_table(r).find("overall"), std::string::npos);
}
