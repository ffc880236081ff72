#pragma once

// Brute-force reference implementations used by the tests.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cseae/corpus.hpp"
#include "cseae/decoding.hpp"
#include "cseae/nn/tensor.hpp"

namespace oracle {

inline std::string fixture(const std::string& name) { return std::string(CSEAE_FIXTURES) + "/" + name; }

/// Sentence index of token i for half-open cut points.
inline std::size_t sentence_of(const std::vector<cseae::SentenceRange>& s, std::size_t i) {
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k].start <= i && i < s[k].end) return k;
  }
  return s.size();
}

/// Row i may attend to column j.
inline bool structure_allowed(const std::vector<cseae::SentenceRange>& s, std::size_t n, std::size_t i,
                              std::size_t j) {
  const std::size_t a = sentence_of(s, i), b = sentence_of(s, j);
  return a == n || b == a || b == n;
}

/// Random tiling of [0, length) into `count` non-empty sentences.
inline std::vector<cseae::SentenceRange> random_partition(std::mt19937_64& rng, std::size_t length,
                                                          std::size_t count) {
  std::vector<std::size_t> cuts(length - 1);
  std::iota(cuts.begin(), cuts.end(), 1);
  std::shuffle(cuts.begin(), cuts.end(), rng);
  cuts.resize(count - 1);
  std::sort(cuts.begin(), cuts.end());
  std::vector<cseae::SentenceRange> out;
  std::size_t prev = 0;
  for (std::size_t c : cuts) {
    out.push_back({prev, c});
    prev = c;
  }
  out.push_back({prev, length});
  return out;
}

/// Minimum of the row-order cost sum over every injective assignment of size min(rows, cols).
inline double brute_force_assignment(const cseae::CostMatrix& c) {
  const std::size_t rows = c.size(), cols = c[0].size();
  double best = std::numeric_limits<double>::infinity();
  if (rows <= cols) {
    std::vector<std::size_t> perm(cols);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) s += c[r][perm[r]];
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    // Choose which row each column goes to; sum in row order.
    std::vector<std::size_t> perm(rows);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      std::vector<std::optional<std::size_t>> row_col(rows);
      for (std::size_t j = 0; j < cols; ++j) row_col[perm[j]] = j;
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        if (row_col[r]) s += c[r][*row_col[r]];
      }
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return best;
}

/// Exhaustive O(L^2) span argmax with the null span and lexicographic ties.
inline cseae::TokenSpan exhaustive_decode(const std::vector<double>& start, const std::vector<double>& end,
                                          const std::vector<bool>& usable, std::size_t max_len) {
  cseae::TokenSpan best{0, 0};
  double best_score = start[0] + end[0];
  for (std::size_t i = 0; i < start.size(); ++i) {
    for (std::size_t j = i; j < start.size(); ++j) {
      if (i == 0) continue;
      if (!usable[i] || !usable[j] || j - i + 1 > max_len) continue;
      const double s = start[i] + end[j];
      if (s > best_score) {
        best_score = s;
        best = {i, j};
      }
    }
  }
  return best;
}

/// Minimum of the role loss over all assignments filling min(#slots, #golds) slots.
inline double enumerate_role_min(const std::vector<const cseae::SlotSelector*>& slots,
                                 const std::vector<cseae::TokenSpan>& golds) {
  const std::size_t k = slots.size(), g = golds.size();
  const std::size_t fill = std::min(k, g);
  double best = std::numeric_limits<double>::infinity();
  // slot -> gold index or -1
  std::vector<int> pick(k, -1);
  std::function<void(std::size_t, std::size_t, std::vector<bool>&)> rec = [&](std::size_t s, std::size_t used,
                                                                               std::vector<bool>& taken) {
    if (s == k) {
      if (used != fill) return;
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        total += slots[i]->span_cost(pick[i] < 0 ? cseae::kNullSpan : golds[static_cast<std::size_t>(pick[i])]);
      }
      best = std::min(best, total);
      return;
    }
    pick[s] = -1;
    rec(s + 1, used, taken);
    for (std::size_t j = 0; j < g; ++j) {
      if (taken[j]) continue;
      taken[j] = true;
      pick[s] = static_cast<int>(j);
      rec(s + 1, used + 1, taken);
      taken[j] = false;
    }
    pick[s] = -1;
  };
  std::vector<bool> taken(g, false);
  rec(0, 0, taken);
  return best;
}

inline cseae::nn::Tensor random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  cseae::nn::Tensor t(rows, cols);
  for (double& v : t.data) v = n(rng);
  return t;
}

}  // namespace oracle
