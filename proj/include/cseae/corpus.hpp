#pragma once

// Annotated documents, context labeling with trigger markers, the sentence
// structure mask, and the corpus-level analyses (same-sentence statistics,
// overlap split, role distances).

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cseae/errors.hpp"

namespace cseae {

/// Inclusive token span [start, end].
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - start + 1; }
  bool contains(std::size_t i) const noexcept { return start <= i && i <= end; }
  bool intersects(const TokenSpan& o) const noexcept { return start <= o.end && o.start <= end; }

  friend auto operator<=>(const TokenSpan&, const TokenSpan&) = default;
};

/// Selector-space value meaning "no argument for this slot". Never valid in gold data.
inline constexpr TokenSpan kNullSpan{0, 0};

/// An argument prediction or gold item: role plus span.
struct RoleSpan {
  std::string role;
  TokenSpan span;
  friend auto operator<=>(const RoleSpan&, const RoleSpan&) = default;
};

/// Half-open token range [start, end).
struct SentenceRange {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - start; }
  bool contains(std::size_t i) const noexcept { return start <= i && i < end; }

  friend auto operator<=>(const SentenceRange&, const SentenceRange&) = default;
};

struct Document {
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<SentenceRange> sentences;

  std::size_t size() const noexcept { return tokens.size(); }

  /// Index of the sentence containing token `i`.
  std::size_t sentence_of(std::size_t i) const {
    auto it = std::upper_bound(sentences.begin(), sentences.end(), i,
                               [](std::size_t v, const SentenceRange& s) { return v < s.end; });
    if (it == sentences.end() || !it->contains(i)) {
      throw std::out_of_range("token " + std::to_string(i) + " outside every sentence of " + doc_id);
    }
    return static_cast<std::size_t>(it - sentences.begin());
  }

  std::string text(const TokenSpan& span) const {
    std::string out;
    for (std::size_t i = span.start; i <= span.end; ++i) {
      if (i != span.start) out += ' ';
      out += tokens.at(i);
    }
    return out;
  }
};

struct Argument {
  std::string role;
  TokenSpan span;
  std::optional<std::size_t> head;

  // Missing heads fall back to the span start.
  std::size_t head_index() const noexcept { return head.value_or(span.start); }
};

struct EventMention {
  std::string event_type;
  TokenSpan trigger;
  std::size_t trigger_head = 0;
  std::vector<Argument> arguments;
};

struct AnnotatedDocument {
  Document doc;
  std::vector<EventMention> events;
};

using Corpus = std::vector<AnnotatedDocument>;

enum class CorpusFormat { kNormalizedJsonl };

// ---------------------------------------------------------------------------
// Validation and I/O
// ---------------------------------------------------------------------------

inline void validate_document(const AnnotatedDocument& ad) {
  const Document& d = ad.doc;
  const std::size_t n = d.size();
  if (d.sentences.empty() && n > 0) throw InvariantError(d.doc_id, "sentences", "no sentences");
  std::size_t expect = 0;
  for (std::size_t s = 0; s < d.sentences.size(); ++s) {
    const auto& r = d.sentences[s];
    if (r.start != expect) {
      throw InvariantError(d.doc_id, "sentences",
                           "sentence " + std::to_string(s) + " starts at " + std::to_string(r.start) +
                               ", expected " + std::to_string(expect));
    }
    if (r.end <= r.start) throw InvariantError(d.doc_id, "sentences", "empty sentence " + std::to_string(s));
    expect = r.end;
  }
  if (expect != n) {
    throw InvariantError(d.doc_id, "sentences",
                         "sentences cover " + std::to_string(expect) + " of " + std::to_string(n) + " tokens");
  }

  auto check_span = [&](const TokenSpan& sp, const std::string& field) {
    if (sp.start > sp.end) throw InvariantError(d.doc_id, field, "start > end");
    if (sp.end >= n) {
      throw InvariantError(d.doc_id, field,
                           "span end " + std::to_string(sp.end) + " >= token count " + std::to_string(n));
    }
  };

  for (std::size_t e = 0; e < ad.events.size(); ++e) {
    const auto& ev = ad.events[e];
    const std::string prefix = "events[" + std::to_string(e) + "]";
    if (ev.event_type.empty()) throw InvariantError(d.doc_id, prefix + ".event_type", "empty event type");
    check_span(ev.trigger, prefix + ".trigger");
    if (d.sentence_of(ev.trigger.start) != d.sentence_of(ev.trigger.end)) {
      throw InvariantError(d.doc_id, prefix + ".trigger", "trigger crosses a sentence boundary");
    }
    if (!ev.trigger.contains(ev.trigger_head)) {
      throw InvariantError(d.doc_id, prefix + ".trigger_head", "head outside trigger span");
    }
    for (std::size_t a = 0; a < ev.arguments.size(); ++a) {
      const auto& arg = ev.arguments[a];
      const std::string af = prefix + ".arguments[" + std::to_string(a) + "]";
      if (arg.role.empty()) throw InvariantError(d.doc_id, af + ".role", "empty role");
      check_span(arg.span, af + ".span");
      if (arg.head && !arg.span.contains(*arg.head)) {
        throw InvariantError(d.doc_id, af + ".head", "head outside argument span");
      }
    }
  }
}

namespace detail {

inline std::size_t json_index(const nlohmann::json& j, const char* what) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) {
    throw std::invalid_argument(std::string(what) + " must be a non-negative integer");
  }
  return j.get<std::size_t>();
}

inline TokenSpan json_span(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument(std::string(what) + " must be [start, end]");
  return {json_index(j[0], what), json_index(j[1], what)};
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline const nlohmann::json& require_array(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_array()) throw std::invalid_argument(std::string("field '") + key + "' must be an array");
  return v;
}

}  // namespace detail

inline AnnotatedDocument document_from_json(const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
  AnnotatedDocument ad;
  ad.doc.doc_id = require_string(j, "doc_id");
  for (const auto& t : require_array(j, "tokens")) {
    if (!t.is_string()) throw std::invalid_argument("tokens must be strings");
    ad.doc.tokens.push_back(t.get<std::string>());
  }
  for (const auto& s : require_array(j, "sentences")) {
    TokenSpan r = json_span(s, "sentence");
    ad.doc.sentences.push_back({r.start, r.end});
  }
  if (auto it = j.find("events"); it != j.end()) {
    if (!it->is_array()) throw std::invalid_argument("field 'events' must be an array");
    for (const auto& e : *it) {
      EventMention ev;
      ev.event_type = require_string(e, "event_type");
      ev.trigger = json_span(require(e, "trigger"), "trigger");
      ev.trigger_head = ev.trigger.start;
      if (auto h = e.find("trigger_head"); h != e.end() && !h->is_null()) {
        ev.trigger_head = json_index(*h, "trigger_head");
      }
      if (auto as = e.find("arguments"); as != e.end()) {
        if (!as->is_array()) throw std::invalid_argument("field 'arguments' must be an array");
        for (const auto& a : *as) {
          Argument arg;
          arg.role = require_string(a, "role");
          arg.span = json_span(require(a, "span"), "span");
          if (auto h = a.find("head"); h != a.end() && !h->is_null()) arg.head = json_index(*h, "head");
          ev.arguments.push_back(std::move(arg));
        }
      }
      ad.events.push_back(std::move(ev));
    }
  }
  return ad;
}

inline nlohmann::json document_to_json(const AnnotatedDocument& ad) {
  nlohmann::json j;
  j["doc_id"] = ad.doc.doc_id;
  j["tokens"] = ad.doc.tokens;
  j["sentences"] = nlohmann::json::array();
  for (const auto& s : ad.doc.sentences) j["sentences"].push_back({s.start, s.end});
  j["events"] = nlohmann::json::array();
  for (const auto& ev : ad.events) {
    nlohmann::json e;
    e["event_type"] = ev.event_type;
    e["trigger"] = {ev.trigger.start, ev.trigger.end};
    e["trigger_head"] = ev.trigger_head;
    e["arguments"] = nlohmann::json::array();
    for (const auto& a : ev.arguments) {
      nlohmann::json ja{{"role", a.role}, {"span", {a.span.start, a.span.end}}};
      if (a.head) ja["head"] = *a.head;
      e["arguments"].push_back(std::move(ja));
    }
    j["events"].push_back(std::move(e));
  }
  return j;
}

/// Reads normalized JSONL, one document per line. Blank lines are skipped.
inline Corpus parse_corpus(std::istream& in, CorpusFormat format = CorpusFormat::kNormalizedJsonl) {
  if (format != CorpusFormat::kNormalizedJsonl) throw DataError("unsupported corpus format");
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AnnotatedDocument ad;
    try {
      ad = document_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(e.what(), lineno);
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what(), lineno);
    }
    validate_document(ad);
    corpus.push_back(std::move(ad));
  }
  return corpus;
}

inline Corpus load_corpus(const std::string& path, CorpusFormat format = CorpusFormat::kNormalizedJsonl) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");
  return parse_corpus(in, format);
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& ad : corpus) out << document_to_json(ad).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Instances
// ---------------------------------------------------------------------------

/// Event indices ordered by trigger start; ties keep gold file order.
inline std::vector<std::size_t> events_by_appearance(const AnnotatedDocument& ad) {
  std::vector<std::size_t> order(ad.events.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ad.events[a].trigger.start < ad.events[b].trigger.start;
  });
  return order;
}

/// One extraction target: a document plus the index of the event to extract.
/// The referenced document must outlive the instance.
struct Instance {
  const AnnotatedDocument* source = nullptr;
  std::size_t target_event_index = 0;
  std::vector<std::size_t> co_event_indices;

  const Document& document() const { return source->doc; }
  const EventMention& target() const { return source->events.at(target_event_index); }
};

inline Instance make_instance(const AnnotatedDocument& ad, std::size_t target) {
  if (target >= ad.events.size()) throw std::out_of_range("event index out of range in " + ad.doc.doc_id);
  return Instance{&ad, target, events_by_appearance(ad)};
}

inline std::vector<Instance> make_instances(const Corpus& corpus) {
  std::vector<Instance> out;
  for (const auto& ad : corpus) {
    for (std::size_t e = 0; e < ad.events.size(); ++e) out.push_back(make_instance(ad, e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Context labeling
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMarker = std::numeric_limits<std::size_t>::max();

/// Marker label for the extraction target.
inline constexpr int kTargetMarkerLabel = -1;

inline std::string open_marker(int label) { return "<t-" + std::to_string(label) + ">"; }
inline std::string close_marker(int label) { return "</t-" + std::to_string(label) + ">"; }

inline bool is_marker_token(const std::string& tok) {
  return tok.size() > 4 && tok.back() == '>' && (tok.rfind("<t-", 0) == 0 || tok.rfind("</t-", 0) == 0);
}

struct LabeledContext {
  std::vector<std::string> labeled_tokens;
  std::vector<std::size_t> to_original;    // kMarker at marker positions
  std::vector<std::size_t> from_original;  // original index -> labeled index
  std::pair<std::size_t, std::size_t> target_marker_ids{0, 0};  // open, close
  std::vector<SentenceRange> sentence_ranges;  // labeled coordinates
  std::size_t trigger_sentence = 0;
  SentenceRange trigger_sentence_range;

  std::size_t size() const noexcept { return labeled_tokens.size(); }
  bool is_marker(std::size_t i) const { return to_original.at(i) == kMarker; }

  TokenSpan to_labeled(const TokenSpan& s) const { return {from_original.at(s.start), from_original.at(s.end)}; }

  std::vector<std::string> strip_markers() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < size(); ++i) {
      if (!is_marker(i)) out.push_back(labeled_tokens[i]);
    }
    return out;
  }
};

/// Marker label of every event: -1 for the target, 0.. in appearance order for the others.
inline std::vector<int> marker_labels(const Instance& inst) {
  std::vector<int> labels(inst.source->events.size(), 0);
  int k = 0;
  for (std::size_t e : inst.co_event_indices) {
    labels[e] = (e == inst.target_event_index) ? kTargetMarkerLabel : k++;
  }
  return labels;
}

/// Wraps every trigger in the document with its marker pair. Triggers that
/// share an identical span get adjacent pairs, the earlier event innermost.
inline LabeledContext label_context(const Instance& inst) {
  const AnnotatedDocument& ad = *inst.source;
  const Document& d = ad.doc;
  const auto& order = inst.co_event_indices;

  for (std::size_t a = 0; a < order.size(); ++a) {
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const auto& ta = ad.events[order[a]].trigger;
      const auto& tb = ad.events[order[b]].trigger;
      if (ta.intersects(tb) && ta != tb) {
        throw InvariantError(d.doc_id, "events[" + std::to_string(order[b]) + "].trigger",
                             "trigger partially overlaps the trigger of event " + std::to_string(order[a]));
      }
    }
  }

  const std::vector<int> labels = marker_labels(inst);
  // opens[i]: events opening before token i, outermost first (later gold index first).
  std::vector<std::vector<std::size_t>> opens(d.size()), closes(d.size());
  for (std::size_t e = 0; e < ad.events.size(); ++e) {
    opens[ad.events[e].trigger.start].push_back(e);
    closes[ad.events[e].trigger.end].push_back(e);
  }

  LabeledContext lc;
  lc.from_original.resize(d.size());
  const std::size_t target_sentence = d.sentence_of(inst.target().trigger.start);
  lc.trigger_sentence = target_sentence;

  std::size_t sentence = 0;
  std::size_t sentence_start = 0;
  auto push_marker = [&](std::size_t e, bool open) {
    int label = labels[e];
    if (e == inst.target_event_index) {
      (open ? lc.target_marker_ids.first : lc.target_marker_ids.second) = lc.labeled_tokens.size();
    }
    lc.labeled_tokens.push_back(open ? open_marker(label) : close_marker(label));
    lc.to_original.push_back(kMarker);
  };

  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i == d.sentences[sentence].start) sentence_start = lc.labeled_tokens.size();
    auto& o = opens[i];
    std::sort(o.begin(), o.end(), std::greater<>());
    for (std::size_t e : o) push_marker(e, true);
    lc.from_original[i] = lc.labeled_tokens.size();
    lc.labeled_tokens.push_back(d.tokens[i]);
    lc.to_original.push_back(i);
    auto& c = closes[i];
    std::sort(c.begin(), c.end());
    for (std::size_t e : c) push_marker(e, false);
    if (i + 1 == d.sentences[sentence].end) {
      lc.sentence_ranges.push_back({sentence_start, lc.labeled_tokens.size()});
      ++sentence;
    }
  }
  lc.trigger_sentence_range = lc.sentence_ranges.at(target_sentence);
  return lc;
}

// ---------------------------------------------------------------------------
// Structure mask
// ---------------------------------------------------------------------------

/// Boolean attention permission matrix. Rows of the trigger sentence see
/// everything; any other sentence sees itself and the trigger sentence.
class StructureMask {
 public:
  StructureMask() = default;
  explicit StructureMask(std::size_t n) : n_(n), allow_(n * n, 0) {}

  std::size_t size() const noexcept { return n_; }
  bool allowed(std::size_t row, std::size_t col) const { return allow_.at(row * n_ + col) != 0; }
  void set(std::size_t row, std::size_t col, bool v) { allow_.at(row * n_ + col) = v ? 1 : 0; }

  std::size_t row_sum(std::size_t row) const {
    std::size_t s = 0;
    for (std::size_t c = 0; c < n_; ++c) s += allow_[row * n_ + c];
    return s;
  }

  friend bool operator==(const StructureMask&, const StructureMask&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> allow_;
};

inline StructureMask build_structure_mask(std::size_t length, std::span<const SentenceRange> sentences,
                                          std::size_t trigger_sentence) {
  if (trigger_sentence >= sentences.size()) {
    throw std::out_of_range("trigger sentence " + std::to_string(trigger_sentence) + " out of range (" +
                            std::to_string(sentences.size()) + " sentences)");
  }
  std::size_t expect = 0;
  for (const auto& s : sentences) {
    if (s.start != expect || s.end <= s.start) throw std::invalid_argument("sentence ranges must tile the sequence");
    expect = s.end;
  }
  if (expect != length) throw std::invalid_argument("sentence ranges do not cover the sequence");

  StructureMask mask(length);
  const SentenceRange& focus = sentences[trigger_sentence];
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const SentenceRange& rows = sentences[s];
    for (std::size_t r = rows.start; r < rows.end; ++r) {
      if (s == trigger_sentence) {
        for (std::size_t c = 0; c < length; ++c) mask.set(r, c, true);
        continue;
      }
      for (std::size_t c = rows.start; c < rows.end; ++c) mask.set(r, c, true);
      for (std::size_t c = focus.start; c < focus.end; ++c) mask.set(r, c, true);
    }
  }
  return mask;
}

inline StructureMask build_structure_mask(const LabeledContext& lc) {
  return build_structure_mask(lc.size(), lc.sentence_ranges, lc.trigger_sentence);
}

// ---------------------------------------------------------------------------
// Corpus analyses
// ---------------------------------------------------------------------------

struct CorpusStats {
  std::size_t document_count = 0;
  std::size_t event_count = 0;
  std::size_t argument_count = 0;
  std::size_t same_sentence_argument_count = 0;
  double same_sentence_argument_fraction = 0.0;
  std::map<std::size_t, std::size_t> events_per_document;  // #events -> #documents
  std::map<long, std::size_t> argument_distance;           // head distance -> #arguments
};

inline long head_distance(std::size_t argument_head, std::size_t trigger_head) {
  return static_cast<long>(argument_head) - static_cast<long>(trigger_head);
}

inline CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats st;
  st.document_count = corpus.size();
  for (const auto& ad : corpus) {
    ++st.events_per_document[ad.events.size()];
    for (const auto& ev : ad.events) {
      ++st.event_count;
      const SentenceRange& sent = ad.doc.sentences[ad.doc.sentence_of(ev.trigger.start)];
      for (const auto& arg : ev.arguments) {
        ++st.argument_count;
        if (sent.contains(arg.span.start) && sent.contains(arg.span.end)) ++st.same_sentence_argument_count;
        ++st.argument_distance[head_distance(arg.head_index(), ev.trigger_head)];
      }
    }
  }
  if (st.argument_count == 0) throw std::domain_error("same-sentence fraction undefined: corpus has no arguments");
  st.same_sentence_argument_fraction =
      static_cast<double>(st.same_sentence_argument_count) / static_cast<double>(st.argument_count);
  return st;
}

struct InstanceRef {
  std::size_t doc = 0;
  std::size_t event = 0;
  friend auto operator<=>(const InstanceRef&, const InstanceRef&) = default;
};

struct OverlapPartition {
  std::vector<InstanceRef> overlap;
  std::vector<InstanceRef> non_overlap;
};

/// True iff two distinct events of the document share an identical argument span.
inline bool has_argument_overlap(const AnnotatedDocument& ad) {
  std::map<TokenSpan, std::size_t> owner;
  for (std::size_t e = 0; e < ad.events.size(); ++e) {
    for (const auto& a : ad.events[e].arguments) {
      auto [it, inserted] = owner.emplace(a.span, e);
      if (!inserted && it->second != e) return true;
    }
  }
  return false;
}

inline OverlapPartition bucket_by_overlap(const Corpus& corpus) {
  OverlapPartition p;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    auto& bucket = has_argument_overlap(corpus[d]) ? p.overlap : p.non_overlap;
    for (std::size_t e = 0; e < corpus[d].events.size(); ++e) bucket.push_back({d, e});
  }
  return p;
}

struct RoleDistance {
  long distance = 0;           // argument head minus trigger head; negative = left of trigger
  bool same_sentence = false;  // the D=0 predicate
  std::size_t argument_index = 0;
};

/// Maximum-magnitude head distance over the role's arguments, sign kept.
/// Ties in magnitude go to the earliest argument in gold order.
inline RoleDistance role_distance(const Document& doc, const EventMention& ev, const std::string& role) {
  std::optional<RoleDistance> best;
  for (std::size_t a = 0; a < ev.arguments.size(); ++a) {
    const auto& arg = ev.arguments[a];
    if (arg.role != role) continue;
    long d = head_distance(arg.head_index(), ev.trigger_head);
    if (!best || std::labs(d) > std::labs(best->distance)) {
      best = RoleDistance{d, doc.sentence_of(arg.head_index()) == doc.sentence_of(ev.trigger_head), a};
    }
  }
  if (!best) throw std::invalid_argument("role '" + role + "' has no gold arguments");
  return *best;
}

}  // namespace cseae
