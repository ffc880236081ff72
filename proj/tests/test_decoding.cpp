#include <gtest/gtest.h>

#include "cseae/decoding.hpp"
#include "oracles.hpp"

using namespace cseae;

TEST(Candidates, NullFirstThenLexicographic) {
  CandidateSet c = CandidateSet::build(4, 2);
  EXPECT_EQ(c.spans, (std::vector<TokenSpan>{{0, 0}, {1, 1}, {1, 2}, {2, 2}, {2, 3}, {3, 3}}));
  EXPECT_THROW(CandidateSet::build(4, 0), std::invalid_argument);
}

TEST(Candidates, MarkersNeverEndpoints) {
  Corpus c = load_corpus(oracle::fixture("multi_event.jsonl"));
  LabeledContext lc = label_context(make_instance(c[0], 0));
  CandidateSet cs = CandidateSet::for_context(lc, kDefaultMaxSpanLength);
  for (const auto& sp : cs.spans) {
    if (sp == kNullSpan) continue;
    EXPECT_FALSE(lc.is_marker(sp.start - kSelectorOffset));
    EXPECT_FALSE(lc.is_marker(sp.end - kSelectorOffset));
    EXPECT_LE(sp.length(), kDefaultMaxSpanLength);
  }
}

TEST(Scoring, AllZeroLogitsPickNull) {
  std::vector<double> z(6, 0.0);
  CandidateSet c = CandidateSet::build(6, 3);
  auto s = span_scores(z, z, c);
  for (const auto& x : s) EXPECT_EQ(x.score, 0.0);
  EXPECT_EQ(select_span(s), kNullSpan);
}

TEST(Scoring, ShortLogitsRejected) {
  std::vector<double> z(3, 0.0);
  EXPECT_THROW(span_scores(z, z, CandidateSet::build(5, 3)), std::out_of_range);
  EXPECT_THROW(select_span({}), std::invalid_argument);
}

TEST(Scoring, ShiftInvariance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(12), b(12);
    for (auto& x : a) x = n(rng);
    for (auto& x : b) x = n(rng);
    CandidateSet c = CandidateSet::build(12, 4);
    TokenSpan base = select_span(span_scores(a, b, c));
    for (auto& x : a) x += 0.5;
    for (auto& x : b) x -= 0.25;
    EXPECT_EQ(select_span(span_scores(a, b, c)), base);
  }
}

TEST(Scoring, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> small(-2, 2);
  for (int t = 0; t < 300; ++t) {
    const std::size_t len = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    const std::size_t lmax = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    std::vector<double> a(len), b(len);
    for (auto& x : a) x = small(rng);
    for (auto& x : b) x = small(rng);
    std::vector<bool> usable(len, true);
    CandidateSet c = CandidateSet::build(len, lmax);
    ASSERT_EQ(select_span(span_scores(a, b, c)), oracle::exhaustive_decode(a, b, usable, lmax));
  }
}

TEST(Selector, ProbabilitiesNormalized) {
  SlotSelector s = SlotSelector::from_logits({1.0, 2.0, -3.0}, {0.0, 0.0, 5.0});
  double ps = 0, pe = 0;
  for (double p : s.start_probs) ps += p;
  for (double p : s.end_probs) pe += p;
  EXPECT_NEAR(ps, 1.0, 1e-12);
  EXPECT_NEAR(pe, 1.0, 1e-12);
  EXPECT_NEAR(s.span_cost({1, 2}), -(s.start_log_probs[1] + s.end_log_probs[2]), 0.0);
  EXPECT_THROW(SlotSelector::from_logits({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST(Hungarian, SquareExample) {
  CostMatrix c{{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
  HungarianResult r = hungarian(c);
  EXPECT_EQ(r.cost, 5.0);
  EXPECT_EQ(r.row_to_col[0], std::optional<std::size_t>(1));
  EXPECT_EQ(r.row_to_col[1], std::optional<std::size_t>(0));
  EXPECT_EQ(r.row_to_col[2], std::optional<std::size_t>(2));
}

TEST(Hungarian, Rectangular) {
  CostMatrix wide{{5, 1, 9}};
  EXPECT_EQ(hungarian(wide).cost, 1.0);
  CostMatrix tall{{5}, {1}, {9}};
  HungarianResult r = hungarian(tall);
  EXPECT_EQ(r.cost, 1.0);
  EXPECT_FALSE(r.row_to_col[0]);
  EXPECT_EQ(r.row_to_col[1], std::optional<std::size_t>(0));
}

TEST(Hungarian, NegativeCostsAndErrors) {
  CostMatrix c{{-1, -5}, {-3, -2}};
  EXPECT_EQ(hungarian(c).cost, -8.0);
  EXPECT_THROW(hungarian({}), std::invalid_argument);
  EXPECT_THROW(hungarian({{1, 2}, {3}}), std::invalid_argument);
  EXPECT_THROW(hungarian({{1, std::nan("")}}), std::invalid_argument);
}

TEST(Hungarian, RandomAgainstBruteForce) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> d(-50, 50);
  for (int t = 0; t < 200; ++t) {
    const std::size_t r = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    CostMatrix c(r, std::vector<double>(k));
    for (auto& row : c) {
      for (auto& x : row) x = d(rng);
    }
    ASSERT_EQ(hungarian(c).cost, oracle::brute_force_assignment(c));
  }
}

TEST(Assignment, OverflowKeepsLowestCost) {
  // One slot, two golds; the slot strongly prefers span (2, 2).
  SlotSelector s = SlotSelector::from_logits({0, 0, 5, 0}, {0, 0, 5, 0});
  std::vector<const SlotSelector*> slots{&s};
  std::vector<TokenSpan> golds{{1, 1}, {2, 2}};
  Assignment a = assign_gold_to_slots(slots, golds);
  EXPECT_EQ(a.overflow, 1u);
  EXPECT_EQ(a.targets(golds), (std::vector<TokenSpan>{{2, 2}}));
}

TEST(Assignment, NoGoldsMeansNullTargets) {
  SlotSelector s = SlotSelector::from_logits({0, 1}, {1, 0});
  std::vector<const SlotSelector*> slots{&s, &s};
  Assignment a = assign_gold_to_slots(slots, {});
  EXPECT_EQ(a.targets({}), (std::vector<TokenSpan>{kNullSpan, kNullSpan}));
  EXPECT_THROW(assign_gold_to_slots({}, {}), std::invalid_argument);
}

TEST(Assignment, UnassignedSlotIsTheOneThatPrefersNull) {
  SlotSelector wants_null = SlotSelector::from_logits({6, 0, 0}, {6, 0, 0});
  SlotSelector wants_span = SlotSelector::from_logits({0, 0, 0}, {0, 0, 0});
  std::vector<const SlotSelector*> slots{&wants_null, &wants_span};
  std::vector<TokenSpan> golds{{1, 2}};
  Assignment a = assign_gold_to_slots(slots, golds);
  EXPECT_FALSE(a.slot_to_gold[0]);
  EXPECT_EQ(a.slot_to_gold[1], std::optional<std::size_t>(0));
}

TEST(Predict, DropsNullAndDuplicates) {
  Corpus c = load_corpus(oracle::fixture("overfit.jsonl"));
  LabeledContext lc = label_context(make_instance(c[1], 0));  // no other events
  const std::size_t n = lc.size() + kSelectorOffset;
  auto one_hot = [&](std::size_t i) {
    std::vector<double> v(n, 0.0);
    v[i] = 10.0;
    return v;
  };
  // "A gunman" is original [0,1] -> labeled [0,1] -> selector [1,2].
  std::vector<RoleSelector> sel{{"Attacker", SlotSelector::from_logits(one_hot(1), one_hot(2))},
                                {"Attacker", SlotSelector::from_logits(one_hot(1), one_hot(2))},
                                {"Target", SlotSelector::from_logits(one_hot(0), one_hot(0))}};
  auto out = predict_event(sel, CandidateSet::for_context(lc, 10), lc);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], (RoleSpan{"Attacker", {0, 1}}));
}

TEST(Predict, SelectorCoordinatesRoundTrip) {
  Corpus c = load_corpus(oracle::fixture("multi_event.jsonl"));
  LabeledContext lc = label_context(make_instance(c[0], 1));
  for (const auto& ev : c[0].events) {
    for (const auto& a : ev.arguments) EXPECT_EQ(selector_to_original(original_to_selector(a.span, lc), lc), a.span);
  }
}
