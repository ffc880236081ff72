#pragma once

// The CsEAE network. Per instance:
//   W_S = decoder(encoder(context, structure mask))      -> structure prefix
//   W_C = encoder(concatenated co-occurring prompts)      -> co-occurrence prefix
//   H_enc    = encoder(context)          with structure prefix
//   H_ctx    = decoder(H_enc, H_enc)     with co-occurrence prefix
//   H_prompt = decoder(prompt, H_enc)    with structure prefix
// and each slot k scores start/end positions as (psi_k * w) . H_ctx[t].

#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cseae/corpus.hpp"
#include "cseae/decoding.hpp"
#include "cseae/errors.hpp"
#include "cseae/nn/backbone.hpp"
#include "cseae/nn/tensor.hpp"
#include "cseae/templates.hpp"

namespace cseae {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

inline constexpr const char* kUnknownToken = "<unk>";
inline constexpr const char* kBosToken = "<s>";

class Vocabulary {
 public:
  Vocabulary() {
    add(kUnknownToken);
    add(kBosToken);
    add(std::string(kPromptSeparator));
  }

  explicit Vocabulary(const std::vector<std::string>& tokens) {
    for (const auto& t : tokens) add(t);
    if (!index_.count(kUnknownToken) || !index_.count(kBosToken)) {
      throw DataError("vocabulary lacks the reserved tokens");
    }
  }

  /// Corpus words, template words, and markers for labels -1 .. marker_labels-1.
  static Vocabulary build(const Corpus& corpus, const TemplateSet& templates, std::size_t marker_labels = 16) {
    Vocabulary v;
    v.add(open_marker(kTargetMarkerLabel));
    v.add(close_marker(kTargetMarkerLabel));
    for (std::size_t k = 0; k < marker_labels; ++k) {
      v.add(open_marker(static_cast<int>(k)));
      v.add(close_marker(static_cast<int>(k)));
    }
    for (const auto& [type, t] : templates) {
      for (const auto& tok : t.template_tokens) v.add(tok);
    }
    for (const auto& ad : corpus) {
      for (const auto& tok : ad.doc.tokens) v.add(tok);
    }
    return v;
  }

  int add(const std::string& tok) {
    auto [it, inserted] = index_.emplace(tok, static_cast<int>(tokens_.size()));
    if (inserted) tokens_.push_back(tok);
    return it->second;
  }

  int id(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? index_.at(kUnknownToken) : it->second;
  }

  std::vector<int> ids(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Prepared instances
// ---------------------------------------------------------------------------

/// Everything the network needs for one instance, computed once.
struct PreparedInstance {
  InstanceRef ref;
  Instance instance;
  LabeledContext labeled;
  std::vector<int> context_ids;  // <s> followed by the labeled context
  nn::Tensor structure_mask;     // additive, over context_ids
  std::vector<int> co_prompt_ids;
  std::size_t co_prompt_truncated = 0;  // tokens cut to fit max_context
  std::vector<int> prompt_ids;
  std::vector<PromptSlot> slots;
  std::vector<std::string> roles;                      // template order
  std::map<std::string, std::vector<TokenSpan>> gold;  // selector space, gold order
  CandidateSet candidates;

  std::size_t context_length() const noexcept { return context_ids.size(); }
};

/// Structure mask over [<s>; labeled context]. <s> belongs to the trigger
/// sentence: it sees every position and every position sees it.
inline nn::Tensor selector_space_mask(const StructureMask& mask) {
  const std::size_t n = mask.size() + kSelectorOffset;
  return nn::additive_mask(n, n, [&](std::size_t r, std::size_t c) {
    if (r < kSelectorOffset || c < kSelectorOffset) return true;
    return mask.allowed(r - kSelectorOffset, c - kSelectorOffset);
  });
}

inline PreparedInstance prepare_instance(const Corpus& corpus, InstanceRef ref, const TemplateSet& templates,
                                         const Vocabulary& vocab, const nn::ModelConfig& cfg,
                                         std::size_t max_span_length = kDefaultMaxSpanLength) {
  const AnnotatedDocument& ad = corpus.at(ref.doc);
  PreparedInstance p;
  p.ref = ref;
  p.instance = make_instance(ad, ref.event);
  p.labeled = label_context(p.instance);

  std::vector<std::string> ctx{kBosToken};
  ctx.insert(ctx.end(), p.labeled.labeled_tokens.begin(), p.labeled.labeled_tokens.end());
  if (ctx.size() > cfg.max_context) {
    throw DataError("context overflow in doc '" + ad.doc.doc_id + "': " + std::to_string(ctx.size()) +
                    " tokens, max_context " + std::to_string(cfg.max_context));
  }
  p.context_ids = vocab.ids(ctx);
  p.structure_mask = selector_space_mask(build_structure_mask(p.labeled));

  p.co_prompt_ids = vocab.ids(concat_co_prompts(p.instance, templates));
  if (p.co_prompt_ids.size() > cfg.max_context) {
    p.co_prompt_truncated = p.co_prompt_ids.size() - cfg.max_context;
    p.co_prompt_ids.resize(cfg.max_context);
  }

  const PromptTemplate& t = template_for(templates, p.instance.target().event_type);
  if (t.template_tokens.size() > cfg.max_context) throw DataError("template longer than max_context");
  p.prompt_ids = vocab.ids(t.template_tokens);
  p.slots = t.slot_layout;
  p.roles = t.roles();
  for (const auto& role : p.roles) p.gold[role];
  for (const auto& a : p.instance.target().arguments) {
    auto it = p.gold.find(a.role);
    if (it == p.gold.end()) {
      throw InvariantError(ad.doc.doc_id, "arguments.role",
                           "role '" + a.role + "' not in template of " + p.instance.target().event_type);
    }
    it->second.push_back(original_to_selector(a.span, p.labeled));
  }
  p.candidates = CandidateSet::for_context(p.labeled, max_span_length);
  return p;
}

inline std::vector<PreparedInstance> prepare_corpus(const Corpus& corpus, const TemplateSet& templates,
                                                    const Vocabulary& vocab, const nn::ModelConfig& cfg,
                                                    std::size_t max_span_length = kDefaultMaxSpanLength) {
  std::vector<PreparedInstance> out;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (std::size_t e = 0; e < corpus[d].events.size(); ++e) {
      out.push_back(prepare_instance(corpus, {d, e}, templates, vocab, cfg, max_span_length));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

struct Ablation {
  bool use_structure = true;
  bool use_co = true;
};

enum class AwarenessKind { kCoOccurrence, kStructure };

struct AwarenessEmbedding {
  AwarenessKind kind;
  nn::Var matrix;  // sequence length x hidden
};

struct Representations {
  nn::Var h_enc;
  nn::Var h_ctx;
  nn::Var h_prompt;
};

struct SlotLogits {
  std::string role;
  nn::Var start;  // 1 x context length
  nn::Var end;
};

struct ForwardResult {
  Representations reps;
  std::vector<SlotLogits> slots;

  std::vector<RoleSelector> selectors() const {
    std::vector<RoleSelector> out;
    for (const auto& s : slots) out.push_back({s.role, SlotSelector::from_logits(s.start->data, s.end->data)});
    return out;
  }
};

/// Learnable len x h query attending over an awareness embedding, then one
/// linear expansion h -> 2*c*h split into c per-layer (key, value) pairs.
struct PrefixCompressor {
  nn::Tensor* query = nullptr;
  nn::MultiHeadAttention attn;
  nn::Linear expand;

  PrefixCompressor() = default;
  PrefixCompressor(nn::ParamStore& ps, const std::string& name, const nn::ModelConfig& cfg, std::mt19937_64& rng) {
    query = &ps.create(name + ".query", cfg.prefix_len, cfg.hidden);
    nn::init_normal(*query, rng);
    attn = nn::MultiHeadAttention(ps, name + ".attn", cfg.hidden, cfg.heads, rng);
    expand = nn::Linear(ps, name + ".expand", cfg.hidden, 2 * cfg.layers * cfg.hidden, rng);
  }

  nn::PrefixPack operator()(nn::Tape& tape, nn::Var w, std::size_t layers, std::size_t hidden,
                            nn::AttentionTrace* trace = nullptr) const {
    if (w.rows() == 0) throw ShapeError("compress_prefix: empty awareness embedding");
    nn::Var compressed = attn(tape, tape.watch(*query), w, nullptr, nullptr, trace);
    nn::Var wide = expand(tape, compressed);
    nn::PrefixPack pack;
    for (std::size_t l = 0; l < layers; ++l) {
      pack.layers.push_back({nn::slice_cols(tape, wide, 2 * l * hidden, (2 * l + 1) * hidden),
                             nn::slice_cols(tape, wide, (2 * l + 1) * hidden, (2 * l + 2) * hidden), nullptr});
    }
    return pack;
  }
};

class CsEaeModel {
 public:
  CsEaeModel(nn::ModelConfig cfg, Vocabulary vocab) : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
    cfg_.vocab_size = vocab_.size();
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    backbone_ = std::make_unique<nn::Backbone>(params_, cfg_, rng);
    co_compressor_ = PrefixCompressor(params_, "prefix.co", cfg_, rng);
    structure_compressor_ = PrefixCompressor(params_, "prefix.structure", cfg_, rng);
    w_start_ = &params_.create("selector.w_start", 1, cfg_.hidden);
    w_end_ = &params_.create("selector.w_end", 1, cfg_.hidden);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (double& v : w_start_->data) v = unit(rng);
    for (double& v : w_end_->data) v = unit(rng);
  }

  CsEaeModel(const CsEaeModel&) = delete;
  CsEaeModel& operator=(const CsEaeModel&) = delete;

  const nn::ModelConfig& config() const noexcept { return cfg_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }
  const nn::Backbone& backbone() const noexcept { return *backbone_; }

  /// Plain encoder pass over the concatenated prompts of all co-occurring events.
  AwarenessEmbedding compute_wc(nn::Tape& tape, const PreparedInstance& p) const {
    return {AwarenessKind::kCoOccurrence, backbone_->encoder_forward(tape, p.co_prompt_ids)};
  }

  /// Encoder under the structure mask, then decoder with that output as input and memory.
  AwarenessEmbedding compute_ws(nn::Tape& tape, const PreparedInstance& p, nn::AttentionTrace* trace = nullptr) const {
    nn::Var enc = backbone_->encoder_forward(tape, p.context_ids, &p.structure_mask, nullptr, trace);
    return {AwarenessKind::kStructure, backbone_->decoder_forward(tape, enc, enc)};
  }

  nn::PrefixPack compress_prefix(nn::Tape& tape, const AwarenessEmbedding& w) const {
    const auto& c = w.kind == AwarenessKind::kCoOccurrence ? co_compressor_ : structure_compressor_;
    return c(tape, w.matrix, cfg_.layers, cfg_.hidden);
  }

  ForwardResult forward(nn::Tape& tape, const PreparedInstance& p, Ablation ablation) const {
    std::optional<nn::PrefixPack> structure, co;
    if (ablation.use_structure) structure = compress_prefix(tape, compute_ws(tape, p));
    if (ablation.use_co) co = compress_prefix(tape, compute_wc(tape, p));
    const nn::PrefixPack* sp = structure ? &*structure : nullptr;
    const nn::PrefixPack* cp = co ? &*co : nullptr;

    ForwardResult r;
    r.reps.h_enc = backbone_->encoder_forward(tape, p.context_ids, nullptr, sp);
    r.reps.h_ctx = backbone_->decoder_forward(tape, r.reps.h_enc, r.reps.h_enc, cp);
    r.reps.h_prompt = backbone_->decoder_forward(tape, backbone_->embed(tape, p.prompt_ids), r.reps.h_enc, sp);
    r.slots = span_logits(tape, r.reps, p);
    return r;
  }

  /// The same pipeline with no prefix machinery at all.
  ForwardResult forward_without_prefixes(nn::Tape& tape, const PreparedInstance& p) const {
    ForwardResult r;
    r.reps.h_enc = backbone_->encoder_forward(tape, p.context_ids);
    r.reps.h_ctx = backbone_->decoder_forward(tape, r.reps.h_enc, r.reps.h_enc);
    r.reps.h_prompt = backbone_->decoder_forward(tape, backbone_->embed(tape, p.prompt_ids), r.reps.h_enc);
    r.slots = span_logits(tape, r.reps, p);
    return r;
  }

 private:
  std::vector<SlotLogits> span_logits(nn::Tape& tape, const Representations& reps, const PreparedInstance& p) const {
    nn::Var ws = tape.watch(*w_start_);
    nn::Var we = tape.watch(*w_end_);
    std::vector<SlotLogits> out;
    for (const auto& slot : p.slots) {
      nn::Var psi = nn::slice_rows(tape, reps.h_prompt, slot.position, slot.position + 1);
      out.push_back({slot.role, nn::matmul_nt(tape, nn::mul(tape, psi, ws), reps.h_ctx),
                     nn::matmul_nt(tape, nn::mul(tape, psi, we), reps.h_ctx)});
    }
    return out;
  }

  nn::ModelConfig cfg_;
  Vocabulary vocab_;
  nn::ParamStore params_;
  std::unique_ptr<nn::Backbone> backbone_;
  PrefixCompressor co_compressor_, structure_compressor_;
  nn::Tensor* w_start_ = nullptr;
  nn::Tensor* w_end_ = nullptr;
};

// ---------------------------------------------------------------------------
// Training targets and loss
// ---------------------------------------------------------------------------

struct SlotTargets {
  std::vector<TokenSpan> spans;  // one per slot, selector space
  std::size_t overflow = 0;      // gold arguments left without a slot
};

/// Per role, matches gold spans to that role's slots by minimum span loss.
inline SlotTargets assign_targets(const std::vector<RoleSelector>& selectors, const PreparedInstance& p) {
  SlotTargets t;
  t.spans.assign(selectors.size(), kNullSpan);
  for (const auto& role : p.roles) {
    std::vector<std::size_t> idx;
    std::vector<const SlotSelector*> slots;
    for (std::size_t k = 0; k < selectors.size(); ++k) {
      if (selectors[k].role == role) {
        idx.push_back(k);
        slots.push_back(&selectors[k].selector);
      }
    }
    const auto& golds = p.gold.at(role);
    Assignment a = assign_gold_to_slots(slots, golds);
    auto spans = a.targets(golds);
    for (std::size_t i = 0; i < idx.size(); ++i) t.spans[idx[i]] = spans[i];
    t.overflow += a.overflow;
  }
  return t;
}

/// Sum over slots of -(log p_start(s_k) + log p_end(e_k)).
inline nn::Var span_loss(nn::Tape& tape, const std::vector<SlotLogits>& slots, const std::vector<TokenSpan>& targets) {
  if (slots.size() != targets.size()) throw ShapeError("span_loss: one target per slot required");
  std::vector<nn::Var> terms;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    nn::Var ls = nn::log_softmax_rows(tape, slots[k].start);
    nn::Var le = nn::log_softmax_rows(tape, slots[k].end);
    terms.push_back(nn::pick(tape, ls, 0, targets[k].start));
    terms.push_back(nn::pick(tape, le, 0, targets[k].end));
  }
  nn::Var total = nn::scale(tape, nn::add_scalars(tape, terms), -1.0);
  if (!std::isfinite(total->data[0])) throw NumericError("non-finite span loss");
  return total;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointFormat = "cseae-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const nn::ModelConfig& c) {
  return {{"hidden", c.hidden},           {"layers", c.layers},         {"heads", c.heads},
          {"ffn", c.ffn},                 {"vocab_size", c.vocab_size}, {"max_context", c.max_context},
          {"prefix_len", c.prefix_len},   {"seed", c.seed}};
}

inline nn::ModelConfig config_from_json(const nlohmann::json& j) {
  nn::ModelConfig c;
  c.hidden = j.at("hidden").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn = j.at("ffn").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_context = j.at("max_context").get<std::size_t>();
  c.prefix_len = j.at("prefix_len").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

/// Extra run settings stored next to the weights.
struct CheckpointMeta {
  Ablation ablation;
  std::size_t max_span_length = kDefaultMaxSpanLength;
  std::size_t steps = 0;
};

inline nlohmann::json checkpoint_to_json(const CsEaeModel& m, const CheckpointMeta& meta) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = config_to_json(m.config());
  j["vocabulary"] = m.vocabulary().tokens();
  j["run"] = {{"use_structure", meta.ablation.use_structure},
              {"use_co", meta.ablation.use_co},
              {"max_span_length", meta.max_span_length},
              {"steps", meta.steps}};
  auto& params = j["parameters"] = nlohmann::json::array();
  const auto& ps = m.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& t = ps.at(i);
    params.push_back({{"name", ps.name(i)}, {"rows", t.rows}, {"cols", t.cols}, {"data", t.data}});
  }
  return j;
}

inline void save_checkpoint(const std::string& path, const CsEaeModel& m, const CheckpointMeta& meta) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(m, meta).dump() << '\n';
  if (!out) throw DataError("write failure on checkpoint '" + path + "'");
}

struct LoadedCheckpoint {
  std::unique_ptr<CsEaeModel> model;
  CheckpointMeta meta;
};

inline LoadedCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kCheckpointFormat) throw DataError("not a checkpoint file");
  if (j.value("version", 0) != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  LoadedCheckpoint lc;
  nn::ModelConfig cfg = config_from_json(j.at("config"));
  lc.model = std::make_unique<CsEaeModel>(cfg, Vocabulary(j.at("vocabulary").get<std::vector<std::string>>()));
  if (lc.model->config().vocab_size != cfg.vocab_size) throw DataError("checkpoint vocabulary size mismatch");
  const auto& run = j.at("run");
  lc.meta.ablation = {run.at("use_structure").get<bool>(), run.at("use_co").get<bool>()};
  lc.meta.max_span_length = run.at("max_span_length").get<std::size_t>();
  lc.meta.steps = run.at("steps").get<std::size_t>();
  auto& ps = lc.model->params();
  const auto& params = j.at("parameters");
  if (params.size() != ps.size()) throw DataError("checkpoint parameter count mismatch");
  for (const auto& p : params) {
    nn::Tensor& t = ps.get(p.at("name").get<std::string>());
    if (p.at("rows").get<std::size_t>() != t.rows || p.at("cols").get<std::size_t>() != t.cols) {
      throw DataError("checkpoint shape mismatch for " + p.at("name").get<std::string>());
    }
    t.data = p.at("data").get<std::vector<double>>();
    if (t.data.size() != t.rows * t.cols) throw DataError("checkpoint data length mismatch");
  }
  return lc;
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace cseae
