#pragma once

// Role prompt templates, co-occurrence prompt concatenation, and the
// three-part LLM prompt used for SFT data export.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cseae/corpus.hpp"
#include "cseae/errors.hpp"

namespace cseae {

/// Reserved token between concatenated prompts.
inline constexpr std::string_view kPromptSeparator = "<sep>";

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

struct PromptSlot {
  std::size_t position = 0;
  std::string role;
  friend bool operator==(const PromptSlot&, const PromptSlot&) = default;
};

/// A role prompt. Slots are written as <Role> in the source text and render
/// as the bare role name.
struct PromptTemplate {
  std::string event_type;
  std::string source;
  std::vector<std::string> template_tokens;
  std::vector<PromptSlot> slot_layout;

  /// Distinct roles in order of first slot.
  std::vector<std::string> roles() const {
    std::vector<std::string> out;
    for (const auto& s : slot_layout) {
      if (std::find(out.begin(), out.end(), s.role) == out.end()) out.push_back(s.role);
    }
    return out;
  }

  std::vector<std::size_t> slots_for(const std::string& role) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < slot_layout.size(); ++k) {
      if (slot_layout[k].role == role) out.push_back(k);
    }
    return out;
  }

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

using TemplateSet = std::map<std::string, PromptTemplate>;

inline PromptTemplate parse_template(const std::string& event_type, const std::string& text) {
  PromptTemplate t;
  t.event_type = event_type;
  t.source = text;
  for (auto& tok : split_whitespace(text)) {
    if (tok.size() > 2 && tok.front() == '<' && tok.back() == '>') {
      std::string role = tok.substr(1, tok.size() - 2);
      t.slot_layout.push_back({t.template_tokens.size(), role});
      t.template_tokens.push_back(std::move(role));
    } else {
      t.template_tokens.push_back(std::move(tok));
    }
  }
  if (t.slot_layout.empty()) throw DataError("template for '" + event_type + "' has no slots");
  return t;
}

inline TemplateSet parse_templates(std::istream& in) {
  TemplateSet out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string event_type, text;
    try {
      auto j = nlohmann::json::parse(line);
      event_type = detail::require_string(j, "event_type");
      text = detail::require_string(j, "template");
    } catch (const nlohmann::json::exception& e) {
      throw DataError(e.what(), lineno);
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what(), lineno);
    }
    if (out.count(event_type)) throw DataError("duplicate event_type '" + event_type + "'", lineno);
    try {
      out.emplace(event_type, parse_template(event_type, text));
    } catch (const DataError& e) {
      throw DataError(e.what(), lineno);
    }
  }
  return out;
}

inline TemplateSet load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open template file '" + path + "'");
  return parse_templates(in);
}

inline void write_templates(std::ostream& out, const TemplateSet& templates) {
  for (const auto& [type, t] : templates) {
    out << nlohmann::json{{"event_type", type}, {"template", t.source}}.dump() << '\n';
  }
}

/// Event types used in the corpus that have no template, sorted.
inline std::vector<std::string> missing_event_types(const Corpus& corpus, const TemplateSet& templates) {
  std::set<std::string> missing;
  for (const auto& ad : corpus) {
    for (const auto& ev : ad.events) {
      if (!templates.count(ev.event_type)) missing.insert(ev.event_type);
    }
  }
  return {missing.begin(), missing.end()};
}

/// Checks that every gold role is one of its event type's template roles.
inline void validate_roles(const Corpus& corpus, const TemplateSet& templates) {
  for (const auto& ad : corpus) {
    for (std::size_t e = 0; e < ad.events.size(); ++e) {
      const auto& ev = ad.events[e];
      auto it = templates.find(ev.event_type);
      if (it == templates.end()) {
        throw InvariantError(ad.doc.doc_id, "events[" + std::to_string(e) + "].event_type",
                             "no template for '" + ev.event_type + "'");
      }
      auto roles = it->second.roles();
      for (std::size_t a = 0; a < ev.arguments.size(); ++a) {
        if (std::find(roles.begin(), roles.end(), ev.arguments[a].role) == roles.end()) {
          throw InvariantError(ad.doc.doc_id,
                               "events[" + std::to_string(e) + "].arguments[" + std::to_string(a) + "].role",
                               "role '" + ev.arguments[a].role + "' not in template of " + ev.event_type);
        }
      }
    }
  }
}

inline const PromptTemplate& template_for(const TemplateSet& templates, const std::string& event_type) {
  auto it = templates.find(event_type);
  if (it == templates.end()) throw DataError("missing template for event type '" + event_type + "'");
  return it->second;
}

/// Prompts of all events in the document, in trigger order, joined by the separator.
inline std::vector<std::string> concat_co_prompts(const Instance& inst, const TemplateSet& templates) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < inst.co_event_indices.size(); ++i) {
    const auto& ev = inst.source->events[inst.co_event_indices[i]];
    const auto& t = template_for(templates, ev.event_type);
    if (i) out.emplace_back(kPromptSeparator);
    out.insert(out.end(), t.template_tokens.begin(), t.template_tokens.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// One-shot example selection
// ---------------------------------------------------------------------------

/// The training instance of `event_type` with the most gold arguments;
/// ties go to the earliest in corpus order.
inline Instance select_example(const std::string& event_type, const Corpus& training) {
  std::optional<Instance> best;
  std::size_t best_count = 0;
  for (const auto& ad : training) {
    for (std::size_t e = 0; e < ad.events.size(); ++e) {
      if (ad.events[e].event_type != event_type) continue;
      std::size_t count = ad.events[e].arguments.size();
      if (!best || count > best_count) {
        best = make_instance(ad, e);
        best_count = count;
      }
    }
  }
  if (!best) throw DataError("no training instance of event type '" + event_type + "'");
  return *best;
}

using ExampleBank = std::map<std::string, Instance>;

inline ExampleBank build_example_bank(const Corpus& training) {
  ExampleBank bank;
  for (const auto& ad : training) {
    for (const auto& ev : ad.events) {
      if (!bank.count(ev.event_type)) bank.emplace(ev.event_type, select_example(ev.event_type, training));
    }
  }
  return bank;
}

// ---------------------------------------------------------------------------
// LLM prompt
// ---------------------------------------------------------------------------

inline constexpr std::string_view kInstructionHeader = "### Instruction\n";
inline constexpr std::string_view kExampleHeader = "\n### Example\n";
inline constexpr std::string_view kQuestionHeader = "\n### Question\n";
inline constexpr std::string_view kDocOpen = "<doc>";
inline constexpr std::string_view kDocClose = "</doc>";
inline constexpr std::string_view kSentenceOpen = "<target-sent>";
inline constexpr std::string_view kSentenceClose = "</target-sent>";

struct LlmPrompt {
  std::string instruction;
  std::string example;
  std::string question;
  bool cs_mode = false;

  /// Instruction and example sections (the SFT "instruction" field).
  std::string head() const {
    return std::string(kInstructionHeader) + instruction + std::string(kExampleHeader) + example;
  }
  /// Question section (the SFT "input" field).
  std::string tail() const { return std::string(kQuestionHeader) + question; }
  std::string text() const { return head() + tail(); }
};

/// Splits a rendered prompt back into its three sections.
inline std::optional<LlmPrompt> split_llm_prompt(std::string_view text) {
  if (text.substr(0, kInstructionHeader.size()) != kInstructionHeader) return std::nullopt;
  auto e = text.find(kExampleHeader);
  if (e == std::string_view::npos) return std::nullopt;
  auto q = text.find(kQuestionHeader, e + kExampleHeader.size());
  if (q == std::string_view::npos) return std::nullopt;
  LlmPrompt p;
  p.instruction = std::string(text.substr(kInstructionHeader.size(), e - kInstructionHeader.size()));
  p.example = std::string(text.substr(e + kExampleHeader.size(), q - e - kExampleHeader.size()));
  p.question = std::string(text.substr(q + kQuestionHeader.size()));
  if (p.question.rfind(kDocOpen, 0) != 0) return std::nullopt;
  if (p.question.size() < kDocClose.size() ||
      p.question.compare(p.question.size() - kDocClose.size(), kDocClose.size(), kDocClose) != 0) {
    return std::nullopt;
  }
  p.cs_mode = p.question.find(kSentenceOpen) != std::string::npos;
  return p;
}

/// Canonical answer: one "Role: [a | b]" line per template role, template order.
inline std::string render_answer(const Document& doc, const EventMention& ev, const PromptTemplate& t) {
  std::ostringstream out;
  auto roles = t.roles();
  for (const auto& arg : ev.arguments) {
    if (std::find(roles.begin(), roles.end(), arg.role) == roles.end()) {
      throw InvariantError(doc.doc_id, "arguments.role", "role '" + arg.role + "' not in template of " + ev.event_type);
    }
  }
  for (std::size_t r = 0; r < roles.size(); ++r) {
    if (r) out << '\n';
    out << roles[r] << ": [";
    bool first = true;
    for (const auto& arg : ev.arguments) {
      if (arg.role != roles[r]) continue;
      if (!first) out << " | ";
      out << doc.text(arg.span);
      first = false;
    }
    out << ']';
  }
  return out.str();
}

inline std::string render_gold(const Instance& inst, const TemplateSet& templates) {
  return render_answer(inst.document(), inst.target(), template_for(templates, inst.target().event_type));
}

namespace detail {

inline std::string trigger_text(const Instance& inst) { return inst.document().text(inst.target().trigger); }

inline std::string instruction_text(const Instance& inst, const PromptTemplate& t, bool cs_mode) {
  std::string s = "Extract the arguments of the " + inst.target().event_type + " event triggered by \"" +
                  trigger_text(inst) + "\" from the document given in the question.";
  s += "\nRoles: " + join(t.roles(), ", ") + ".";
  s += "\nAnswer with one line per role in the form Role: [argument | argument], in the role order above. "
       "Write [] for a role without arguments. Copy every argument exactly as it appears in the document.";
  if (cs_mode) {
    s += "\nEvery event trigger in the document is enclosed in numbered t tags. The trigger of the event to "
         "extract is numbered -1. The sentence containing that trigger is enclosed in target-sent tags. Pay "
         "attention to these marks: the other marked events help separate the target event from its "
         "neighbours, and most arguments lie in the marked sentence.";
  }
  return s;
}

inline std::string example_text(const Instance& ex, const TemplateSet& templates) {
  return "Document: " + join(ex.document().tokens, " ") + "\nTrigger: " + trigger_text(ex) +
         "\nAnswer:\n" + render_gold(ex, templates);
}

inline std::string question_text(const Instance& inst, bool cs_mode) {
  std::vector<std::string> toks;
  if (!cs_mode) {
    toks = inst.document().tokens;
  } else {
    LabeledContext lc = label_context(inst);
    for (std::size_t i = 0; i < lc.size(); ++i) {
      if (i == lc.trigger_sentence_range.start) toks.emplace_back(kSentenceOpen);
      toks.push_back(lc.labeled_tokens[i]);
      if (i + 1 == lc.trigger_sentence_range.end) toks.emplace_back(kSentenceClose);
    }
  }
  return std::string(kDocOpen) + " " + join(toks, " ") + " " + std::string(kDocClose);
}

}  // namespace detail

inline LlmPrompt build_llm_prompt(const Instance& inst, const TemplateSet& templates, const ExampleBank& bank,
                                  bool cs_mode) {
  const auto& t = template_for(templates, inst.target().event_type);
  auto ex = bank.find(inst.target().event_type);
  if (ex == bank.end()) throw DataError("no example for event type '" + inst.target().event_type + "'");
  LlmPrompt p;
  p.cs_mode = cs_mode;
  p.instruction = detail::instruction_text(inst, t, cs_mode);
  p.example = detail::example_text(ex->second, templates);
  p.question = detail::question_text(inst, cs_mode);
  return p;
}

// ---------------------------------------------------------------------------
// Output parsing
// ---------------------------------------------------------------------------

struct ParsedAnswer {
  std::vector<RoleSpan> arguments;
  std::size_t unmatched = 0;
  std::vector<std::string> errors;  // one per malformed line
};

/// Earliest token subsequence of `doc` equal to `words`.
inline std::optional<TokenSpan> find_earliest(const Document& doc, const std::vector<std::string>& words) {
  if (words.empty() || words.size() > doc.size()) return std::nullopt;
  for (std::size_t i = 0; i + words.size() <= doc.size(); ++i) {
    if (std::equal(words.begin(), words.end(), doc.tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
      return TokenSpan{i, i + words.size() - 1};
    }
  }
  return std::nullopt;
}

inline ParsedAnswer parse_llm_output(std::string_view text, const Document& doc) {
  ParsedAnswer out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    if (line.empty()) continue;

    auto colon = line.find(": [");
    if (colon == std::string_view::npos || colon == 0 || line.back() != ']') {
      out.errors.push_back("line " + std::to_string(lineno) + ": expected 'Role: [...]'");
      continue;
    }
    std::string role(line.substr(0, colon));
    std::string_view inner = line.substr(colon + 3, line.size() - colon - 4);
    if (split_whitespace(inner).empty()) continue;

    std::size_t p = 0;
    while (p <= inner.size()) {
      auto bar = inner.find(" | ", p);
      std::string_view piece = inner.substr(p, bar == std::string_view::npos ? std::string_view::npos : bar - p);
      p = (bar == std::string_view::npos) ? inner.size() + 1 : bar + 3;
      auto words = split_whitespace(piece);
      if (words.empty()) continue;
      if (auto span = find_earliest(doc, words)) {
        out.arguments.push_back({role, *span});
      } else {
        ++out.unmatched;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SFT export
// ---------------------------------------------------------------------------

struct SftRecord {
  std::string instruction;
  std::string input;
  std::string output;
};

inline SftRecord make_sft_record(const Instance& inst, const TemplateSet& templates, const ExampleBank& bank,
                                 bool cs_mode) {
  LlmPrompt p = build_llm_prompt(inst, templates, bank, cs_mode);
  return {p.head(), p.tail(), render_gold(inst, templates)};
}

/// Writes one JSONL record per instance, corpora in the given order. Each
/// corpus supplies its own one-shot examples.
inline std::size_t export_sft(const std::vector<const Corpus*>& corpora, const TemplateSet& templates, bool cs_mode,
                              std::ostream& out) {
  std::size_t written = 0;
  for (const Corpus* corpus : corpora) {
    ExampleBank bank = build_example_bank(*corpus);
    for (const auto& inst : make_instances(*corpus)) {
      SftRecord r = make_sft_record(inst, templates, bank, cs_mode);
      out << nlohmann::json{{"instruction", r.instruction}, {"input", r.input}, {"output", r.output}}.dump() << '\n';
      ++written;
    }
  }
  if (!out) throw DataError("write failure while exporting SFT data");
  return written;
}

inline std::size_t export_sft(const std::vector<const Corpus*>& corpora, const TemplateSet& templates, bool cs_mode,
                              const std::string& out_path) {
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot open '" + out_path + "' for writing");
  return export_sft(corpora, templates, cs_mode, out);
}

}  // namespace cseae
