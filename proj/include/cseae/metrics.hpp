#pragma once

// Arg-I / Arg-C scoring with predictions attached to their trigger, and the
// overlap, distance and same-sentence breakdowns.

#include <cstddef>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "cseae/corpus.hpp"
#include "cseae/errors.hpp"

namespace cseae {

struct Prediction {
  std::string doc_id;
  std::size_t event_index = 0;
  std::string role;
  TokenSpan span;
  std::string text;
};

inline nlohmann::json prediction_to_json(const Prediction& p) {
  return {{"doc_id", p.doc_id}, {"event_index", p.event_index}, {"role", p.role},
          {"span", {p.span.start, p.span.end}}, {"text", p.text}};
}

inline std::vector<Prediction> parse_predictions(std::istream& in) {
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      Prediction p;
      p.doc_id = detail::require_string(j, "doc_id");
      p.event_index = detail::json_index(detail::require(j, "event_index"), "event_index");
      p.role = detail::require_string(j, "role");
      p.span = detail::json_span(detail::require(j, "span"), "span");
      if (auto t = j.find("text"); t != j.end() && t->is_string()) p.text = t->get<std::string>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(e.what(), lineno);
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what(), lineno);
    }
  }
  return out;
}

inline std::vector<Prediction> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file '" + path + "'");
  return parse_predictions(in);
}

inline void write_predictions(std::ostream& out, const std::vector<Prediction>& preds) {
  for (const auto& p : preds) out << prediction_to_json(p).dump() << '\n';
}

/// Gold arguments rendered as predictions; scores 1.0 against its source.
inline std::vector<Prediction> gold_as_predictions(const Corpus& corpus) {
  std::vector<Prediction> out;
  for (const auto& ad : corpus) {
    for (std::size_t e = 0; e < ad.events.size(); ++e) {
      for (const auto& a : ad.events[e].arguments) {
        out.push_back({ad.doc.doc_id, e, a.role, a.span, ad.doc.text(a.span)});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct PrfScore {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t matched = 0;

  double precision() const { return predicted ? static_cast<double>(matched) / static_cast<double>(predicted) : 0.0; }
  double recall() const { return gold ? static_cast<double>(matched) / static_cast<double>(gold) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }

  PrfScore& operator+=(const PrfScore& o) {
    gold += o.gold;
    predicted += o.predicted;
    matched += o.matched;
    return *this;
  }
};

struct EvalReport {
  PrfScore arg_i;
  PrfScore arg_c;
  std::map<std::string, EvalReport> buckets;

  // Headline counts follow Arg-C.
  std::size_t gold() const { return arg_c.gold; }
  std::size_t predicted() const { return arg_c.predicted; }
  std::size_t matched() const { return arg_c.matched; }
};

inline nlohmann::json to_json(const PrfScore& s) {
  return {{"precision", s.precision()}, {"recall", s.recall()}, {"f1", s.f1()},
          {"gold", s.gold},             {"predicted", s.predicted}, {"matched", s.matched}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["arg_i"] = to_json(r.arg_i);
  j["arg_c"] = to_json(r.arg_c);
  j["counts"] = {{"gold", r.gold()}, {"predicted", r.predicted()}, {"matched", r.matched()}};
  j["buckets"] = nlohmann::json::object();
  for (const auto& [label, b] : r.buckets) j["buckets"][label] = to_json(b);
  return j;
}

/// Fixed-width table: one overall row, then one row per bucket.
inline std::string render_table(const EvalReport& r) {
  std::ostringstream out;
  auto row = [&](const std::string& label, const EvalReport& e) {
    out << std::left << std::setw(16) << label << std::right << std::fixed << std::setprecision(2)
        << std::setw(8) << 100.0 * e.arg_i.precision() << std::setw(8) << 100.0 * e.arg_i.recall() << std::setw(8)
        << 100.0 * e.arg_i.f1() << std::setw(8) << 100.0 * e.arg_c.precision() << std::setw(8)
        << 100.0 * e.arg_c.recall() << std::setw(8) << 100.0 * e.arg_c.f1() << std::setw(8) << e.gold()
        << std::setw(8) << e.predicted() << '\n';
  };
  out << std::left << std::setw(16) << "bucket" << std::right << std::setw(8) << "I-P" << std::setw(8) << "I-R"
      << std::setw(8) << "I-F1" << std::setw(8) << "C-P" << std::setw(8) << "C-R" << std::setw(8) << "C-F1"
      << std::setw(8) << "gold" << std::setw(8) << "pred" << '\n';
  row("overall", r);
  for (const auto& [label, b] : r.buckets) row(label, b);
  return out.str();
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

namespace detail {

struct EventItems {
  std::vector<RoleSpan> gold;
  std::vector<RoleSpan> pred;
};

/// Per event: for each prediction, the gold index it matches (or none) under
/// Arg-I and Arg-C. Each gold is used at most once. Arg-I prefers a gold of
/// the same role so that a pair matched under Arg-C is the same pair.
struct EventMatch {
  std::vector<std::optional<std::size_t>> arg_i;
  std::vector<std::optional<std::size_t>> arg_c;
};

inline EventMatch match_event(const EventItems& items) {
  EventMatch m;
  std::vector<char> used_c(items.gold.size(), 0), used_i(items.gold.size(), 0);
  for (const auto& p : items.pred) {
    std::optional<std::size_t> c;
    for (std::size_t g = 0; g < items.gold.size(); ++g) {
      if (!used_c[g] && items.gold[g] == p) {
        used_c[g] = 1;
        c = g;
        break;
      }
    }
    m.arg_c.push_back(c);
  }
  // Same-role span matches first, then any-role.
  m.arg_i.assign(items.pred.size(), std::nullopt);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t k = 0; k < items.pred.size(); ++k) {
      if (m.arg_i[k]) continue;
      const auto& p = items.pred[k];
      for (std::size_t g = 0; g < items.gold.size(); ++g) {
        if (used_i[g] || items.gold[g].span != p.span) continue;
        if (pass == 0 && items.gold[g].role != p.role) continue;
        used_i[g] = 1;
        m.arg_i[k] = g;
        break;
      }
    }
  }
  return m;
}

inline std::map<std::pair<std::size_t, std::size_t>, EventItems> group_items(const Corpus& gold,
                                                                            const std::vector<Prediction>& preds) {
  std::map<std::string, std::size_t> doc_index;
  for (std::size_t d = 0; d < gold.size(); ++d) doc_index.emplace(gold[d].doc.doc_id, d);
  std::map<std::pair<std::size_t, std::size_t>, EventItems> groups;
  for (std::size_t d = 0; d < gold.size(); ++d) {
    for (std::size_t e = 0; e < gold[d].events.size(); ++e) {
      auto& g = groups[{d, e}];
      for (const auto& a : gold[d].events[e].arguments) g.gold.push_back({a.role, a.span});
    }
  }
  for (const auto& p : preds) {
    auto it = doc_index.find(p.doc_id);
    if (it == doc_index.end() || p.event_index >= gold[it->second].events.size()) {
      throw DataError("prediction references unknown event (" + p.doc_id + ", " + std::to_string(p.event_index) + ")");
    }
    groups[{it->second, p.event_index}].pred.push_back({p.role, p.span});
  }
  return groups;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scoring and bucketing
// ---------------------------------------------------------------------------

enum class Bucketing { kOverlap, kDistance, kSameSentence };

/// Lower bounds of the distance bins; a distance falls in the last bin whose
/// bound is <= it. The first bound must be the minimum long.
struct DistanceBins {
  std::vector<long> lower_bounds{std::numeric_limits<long>::min(), -20, -10, 0, 1, 11, 21};

  std::size_t index(long d) const {
    std::size_t i = 0;
    for (std::size_t b = 0; b < lower_bounds.size(); ++b) {
      if (lower_bounds[b] <= d) i = b;
    }
    return i;
  }

  std::string label(std::size_t i) const {
    const long lo = lower_bounds[i];
    const bool open_low = lo == std::numeric_limits<long>::min();
    if (i + 1 == lower_bounds.size()) return open_low ? "all" : "d>=" + std::to_string(lo);
    const long hi = lower_bounds[i + 1] - 1;
    if (open_low) return "d<=" + std::to_string(hi);
    if (lo == hi) return "d=" + std::to_string(lo);
    return std::to_string(lo) + ".." + std::to_string(hi);
  }
};

inline constexpr const char* kOverlapBucket = "overlap";
inline constexpr const char* kNonOverlapBucket = "non_overlap";
inline constexpr const char* kSameSentenceBucket = "D=0";
inline constexpr const char* kCrossSentenceBucket = "D!=0";
inline constexpr const char* kNoGoldBucket = "no_gold";

namespace detail {

/// Scores every event, sending each item to `bucket_of(doc, event, role)`.
/// A matched pair is counted in the bucket of its gold item.
template <typename BucketOf>
void accumulate(const Corpus& gold, const std::vector<Prediction>& preds, BucketOf&& bucket_of,
                std::map<std::string, EvalReport>& out) {
  for (const auto& [key, items] : group_items(gold, preds)) {
    const auto [d, e] = key;
    EventMatch m = match_event(items);
    for (const auto& g : items.gold) {
      auto& b = out[bucket_of(d, e, g.role)];
      ++b.arg_i.gold;
      ++b.arg_c.gold;
    }
    for (std::size_t k = 0; k < items.pred.size(); ++k) {
      const auto& own = items.pred[k].role;
      auto& bi = out[bucket_of(d, e, m.arg_i[k] ? items.gold[*m.arg_i[k]].role : own)];
      ++bi.arg_i.predicted;
      if (m.arg_i[k]) ++bi.arg_i.matched;
      auto& bc = out[bucket_of(d, e, own)];
      ++bc.arg_c.predicted;
      if (m.arg_c[k]) ++bc.arg_c.matched;
    }
  }
}

}  // namespace detail

/// Micro-averaged Arg-I and Arg-C over the corpus.
inline EvalReport score(const Corpus& gold, const std::vector<Prediction>& preds) {
  std::map<std::string, EvalReport> one;
  detail::accumulate(gold, preds, [](std::size_t, std::size_t, const std::string&) { return std::string(); },
                     one);
  return one.empty() ? EvalReport{} : one.begin()->second;
}

inline std::map<std::string, EvalReport> bucket_report(const Corpus& gold, const std::vector<Prediction>& preds,
                                                       Bucketing bucketing, const DistanceBins& bins = {}) {
  std::map<std::string, EvalReport> out;
  if (bucketing == Bucketing::kOverlap) {
    std::vector<char> overlap(gold.size());
    for (std::size_t d = 0; d < gold.size(); ++d) overlap[d] = has_argument_overlap(gold[d]) ? 1 : 0;
    detail::accumulate(
        gold, preds,
        [&](std::size_t d, std::size_t, const std::string&) {
          return std::string(overlap[d] ? kOverlapBucket : kNonOverlapBucket);
        },
        out);
    return out;
  }

  // Role-level: the bucket of (event, role) comes from the role's gold distance.
  std::map<std::tuple<std::size_t, std::size_t, std::string>, std::string> role_bucket;
  for (std::size_t d = 0; d < gold.size(); ++d) {
    for (std::size_t e = 0; e < gold[d].events.size(); ++e) {
      const auto& ev = gold[d].events[e];
      for (const auto& a : ev.arguments) {
        auto key = std::make_tuple(d, e, a.role);
        if (role_bucket.count(key)) continue;
        RoleDistance rd = role_distance(gold[d].doc, ev, a.role);
        role_bucket[key] = bucketing == Bucketing::kDistance
                               ? bins.label(bins.index(rd.distance))
                               : std::string(rd.same_sentence ? kSameSentenceBucket : kCrossSentenceBucket);
      }
    }
  }
  detail::accumulate(
      gold, preds,
      [&](std::size_t d, std::size_t e, const std::string& role) {
        auto it = role_bucket.find({d, e, role});
        return it == role_bucket.end() ? std::string(kNoGoldBucket) : it->second;
      },
      out);
  return out;
}

inline EvalReport score_with_buckets(const Corpus& gold, const std::vector<Prediction>& preds,
                                     std::optional<Bucketing> bucketing, const DistanceBins& bins = {}) {
  EvalReport r = score(gold, preds);
  if (bucketing) r.buckets = bucket_report(gold, preds, *bucketing, bins);
  return r;
}

}  // namespace cseae
