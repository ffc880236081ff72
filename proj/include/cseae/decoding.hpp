#pragma once

// Span scoring and argmax decoding, the Hungarian solver, and the matching
// of gold arguments to role slots.
//
// Selector space: position 0 is reserved for the null span, and position
// p >= 1 is labeled-context index p - 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cseae/corpus.hpp"

namespace cseae {

inline constexpr std::size_t kSelectorOffset = 1;
inline constexpr std::size_t kDefaultMaxSpanLength = 10;

inline std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : logits) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> out(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += (out[i] = std::exp(logits[i] - mx));
  for (double& v : out) v /= s;
  return out;
}

/// Start/end distributions of one slot over selector positions.
struct SlotSelector {
  std::vector<double> start_logits, end_logits;
  std::vector<double> start_probs, end_probs;
  std::vector<double> start_log_probs, end_log_probs;

  static SlotSelector from_logits(std::vector<double> start, std::vector<double> end) {
    if (start.size() != end.size()) throw std::invalid_argument("start/end logits differ in length");
    SlotSelector s;
    s.start_probs = softmax(start);
    s.end_probs = softmax(end);
    s.start_log_probs = log_softmax(start);
    s.end_log_probs = log_softmax(end);
    s.start_logits = std::move(start);
    s.end_logits = std::move(end);
    return s;
  }

  std::size_t size() const noexcept { return start_logits.size(); }

  /// -(log p_start(s) + log p_end(e)).
  double span_cost(const TokenSpan& sp) const { return -(start_log_probs.at(sp.start) + end_log_probs.at(sp.end)); }
};

// ---------------------------------------------------------------------------
// Candidates and scoring
// ---------------------------------------------------------------------------

/// The null span followed by every (i, j), 1 <= i <= j < length, of at most
/// max_span_length tokens whose endpoints are usable, in lexicographic order.
struct CandidateSet {
  std::vector<TokenSpan> spans;
  std::size_t length = 0;
  std::size_t max_span_length = kDefaultMaxSpanLength;

  static CandidateSet build(std::size_t length, std::size_t max_span_length,
                            const std::function<bool(std::size_t)>& usable) {
    if (max_span_length == 0) throw std::invalid_argument("max span length must be positive");
    CandidateSet c;
    c.length = length;
    c.max_span_length = max_span_length;
    c.spans.push_back(kNullSpan);
    for (std::size_t i = 1; i < length; ++i) {
      if (!usable(i)) continue;
      for (std::size_t j = i; j < length && j - i + 1 <= max_span_length; ++j) {
        if (usable(j)) c.spans.push_back({i, j});
      }
    }
    return c;
  }

  static CandidateSet build(std::size_t length, std::size_t max_span_length) {
    return build(length, max_span_length, [](std::size_t) { return true; });
  }

  /// Selector-space candidates over a labeled context; marker positions are never endpoints.
  static CandidateSet for_context(const LabeledContext& lc, std::size_t max_span_length) {
    return build(lc.size() + kSelectorOffset, max_span_length,
                 [&lc](std::size_t p) { return !lc.is_marker(p - kSelectorOffset); });
  }
};

struct ScoredSpan {
  TokenSpan span;
  double score = 0.0;
};

/// score(i, j) = start_logit[i] + end_logit[j] for every candidate.
inline std::vector<ScoredSpan> span_scores(std::span<const double> start_logits, std::span<const double> end_logits,
                                           const CandidateSet& candidates) {
  std::vector<ScoredSpan> out;
  out.reserve(candidates.spans.size());
  for (const auto& sp : candidates.spans) {
    if (sp.end >= start_logits.size() || sp.end >= end_logits.size()) {
      throw std::out_of_range("candidate span (" + std::to_string(sp.start) + ", " + std::to_string(sp.end) +
                              ") outside logits");
    }
    out.push_back({sp, start_logits[sp.start] + end_logits[sp.end]});
  }
  return out;
}

inline std::vector<ScoredSpan> span_scores(const SlotSelector& sel, const CandidateSet& candidates) {
  return span_scores(sel.start_logits, sel.end_logits, candidates);
}

/// Highest score; ties go to the lexicographically smallest span.
inline TokenSpan select_span(std::span<const ScoredSpan> scored) {
  if (scored.empty()) throw std::invalid_argument("select_span: no candidates");
  const ScoredSpan* best = &scored[0];
  for (const auto& s : scored) {
    if (s.score > best->score || (s.score == best->score && s.span < best->span)) best = &s;
  }
  return best->span;
}

// ---------------------------------------------------------------------------
// Hungarian algorithm
// ---------------------------------------------------------------------------

using CostMatrix = std::vector<std::vector<double>>;

struct HungarianResult {
  std::vector<std::optional<std::size_t>> row_to_col;
  double cost = 0.0;
};

/// Sum of the chosen entries in row order.
inline double assignment_cost(const CostMatrix& cost, const std::vector<std::optional<std::size_t>>& row_to_col) {
  double total = 0.0;
  for (std::size_t r = 0; r < row_to_col.size(); ++r) {
    if (row_to_col[r]) total += cost[r][*row_to_col[r]];
  }
  return total;
}

/// Minimum-cost injective assignment of size min(rows, cols). Rectangular
/// input is padded to square with zero-cost dummy rows or columns, which
/// shifts every complete assignment by the same amount.
inline HungarianResult hungarian(const CostMatrix& cost) {
  const std::size_t rows = cost.size();
  if (rows == 0 || cost[0].empty()) throw std::invalid_argument("hungarian: empty cost matrix");
  const std::size_t cols = cost[0].size();
  for (const auto& r : cost) {
    if (r.size() != cols) throw std::invalid_argument("hungarian: ragged cost matrix");
    for (double v : r) {
      if (!std::isfinite(v)) throw std::invalid_argument("hungarian: non-finite cost");
    }
  }

  const std::size_t n = std::max(rows, cols);
  auto c = [&](std::size_t i, std::size_t j) { return (i < rows && j < cols) ? cost[i][j] : 0.0; };

  // Shortest augmenting paths with potentials; 1-based with a sentinel at 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  HungarianResult res;
  res.row_to_col.assign(rows, std::nullopt);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = match[j];
    if (i >= 1 && i - 1 < rows && j - 1 < cols) res.row_to_col[i - 1] = j - 1;
  }
  res.cost = assignment_cost(cost, res.row_to_col);
  return res;
}

// ---------------------------------------------------------------------------
// Gold-to-slot matching
// ---------------------------------------------------------------------------

struct Assignment {
  std::vector<std::optional<std::size_t>> slot_to_gold;  // nullopt = null span
  std::size_t overflow = 0;                              // golds left without a slot

  std::vector<TokenSpan> targets(std::span<const TokenSpan> golds) const {
    std::vector<TokenSpan> out;
    for (const auto& g : slot_to_gold) out.push_back(g ? golds[*g] : kNullSpan);
    return out;
  }
};

/// Loss of one role's slots under an assignment: each slot pays the cost of
/// its gold span, or of the null span when unassigned.
inline double role_objective(std::span<const SlotSelector* const> slots, std::span<const TokenSpan> golds,
                             const Assignment& a) {
  double total = 0.0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    total += slots[k]->span_cost(a.slot_to_gold[k] ? golds[*a.slot_to_gold[k]] : kNullSpan);
  }
  return total;
}

/// Minimizes the role's span loss over assignments that fill
/// min(#slots, #golds) slots. Matching on cost(slot, gold) minus the slot's
/// null cost keeps the choice of unassigned slots optimal too.
inline Assignment assign_gold_to_slots(std::span<const SlotSelector* const> slots, std::span<const TokenSpan> golds) {
  if (slots.empty()) throw std::invalid_argument("assign_gold_to_slots: role has no slots");
  Assignment a;
  a.slot_to_gold.assign(slots.size(), std::nullopt);
  if (golds.empty()) return a;
  CostMatrix cost(slots.size(), std::vector<double>(golds.size()));
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double null_cost = slots[k]->span_cost(kNullSpan);
    for (std::size_t g = 0; g < golds.size(); ++g) cost[k][g] = slots[k]->span_cost(golds[g]) - null_cost;
  }
  a.slot_to_gold = hungarian(cost).row_to_col;
  a.overflow = golds.size() > slots.size() ? golds.size() - slots.size() : 0;
  return a;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

inline TokenSpan selector_to_original(const TokenSpan& sp, const LabeledContext& lc) {
  const std::size_t s = lc.to_original.at(sp.start - kSelectorOffset);
  const std::size_t e = lc.to_original.at(sp.end - kSelectorOffset);
  if (s == kMarker || e == kMarker) throw std::invalid_argument("span endpoint on a marker token");
  return {s, e};
}

inline TokenSpan original_to_selector(const TokenSpan& sp, const LabeledContext& lc) {
  return {lc.from_original.at(sp.start) + kSelectorOffset, lc.from_original.at(sp.end) + kSelectorOffset};
}

struct RoleSelector {
  std::string role;
  SlotSelector selector;
};

/// Argmax span per slot, null spans dropped, mapped to original token
/// indices, duplicates removed (first occurrence kept).
inline std::vector<RoleSpan> predict_event(std::span<const RoleSelector> slots, const CandidateSet& candidates,
                                           const LabeledContext& lc) {
  std::vector<RoleSpan> out;
  for (const auto& s : slots) {
    auto scored = span_scores(s.selector, candidates);
    TokenSpan best = select_span(scored);
    if (best == kNullSpan) continue;
    RoleSpan rs{s.role, selector_to_original(best, lc)};
    if (std::find(out.begin(), out.end(), rs) == out.end()) out.push_back(std::move(rs));
  }
  return out;
}

}  // namespace cseae
