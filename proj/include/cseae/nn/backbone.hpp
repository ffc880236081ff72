#pragma once

// Pre-norm encoder-decoder transformer with additive attention masks and
// per-layer key/value prefixes on self-attention.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cseae/errors.hpp"
#include "cseae/nn/tensor.hpp"

namespace cseae::nn {

struct ModelConfig {
  std::size_t hidden = 32;
  std::size_t layers = 2;  // per stack: the encoder and the decoder each have this many
  std::size_t heads = 4;
  std::size_t ffn = 128;
  std::size_t vocab_size = 0;
  std::size_t max_context = 256;
  std::size_t prefix_len = 40;
  std::uint64_t seed = 42;

  void validate() const {
    if (hidden == 0 || layers == 0 || heads == 0 || ffn == 0 || vocab_size == 0 || max_context == 0) {
      throw std::invalid_argument("model config: all sizes must be positive");
    }
    if (hidden % heads != 0) throw std::invalid_argument("model config: hidden must be divisible by heads");
    if (prefix_len == 0) throw std::invalid_argument("model config: prefix_len must be >= 1");
  }
};

/// Named parameters with stable addresses, in creation order.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Tensor& create(const std::string& name, std::size_t rows, std::size_t cols, double fill = 0.0) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    index_.emplace(name, tensors_.size());
    names_.push_back(name);
    tensors_.emplace_back(rows, cols, fill);
    return tensors_.back();
  }

  Tensor& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
    return tensors_[it->second];
  }
  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
    return tensors_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& at(std::size_t i) { return tensors_.at(i); }
  const Tensor& at(std::size_t i) const { return tensors_.at(i); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  std::vector<Tensor*> pointers() {
    std::vector<Tensor*> out;
    for (auto& t : tensors_) out.push_back(&t);
    return out;
  }

  void zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
  }

 private:
  std::deque<Tensor> tensors_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
};

inline void init_normal(Tensor& t, std::mt19937_64& rng, double stddev = 0.02) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data) v = dist(rng);
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

/// Keys and values prepended to an attention call. Both are len x hidden,
/// already in projected key/value space. `key_mask` (1 x len, additive) is
/// optional and defaults to all-allowed.
struct PrefixKV {
  Var keys;
  Var values;
  const Tensor* key_mask = nullptr;
};

/// One entry per layer of a stack.
struct PrefixPack {
  std::vector<PrefixKV> layers;
};

/// Post-softmax weights captured per call and head, in call order.
struct AttentionTrace {
  std::vector<Tensor> weights;
};

/// Multi-head scaled dot-product attention over [prefix keys; keys].
/// `additive_mask` is Lq x Lk (0 allowed, -inf forbidden) and may be null.
inline Var attention(Tape& tape, Var queries, Var keys, Var values, std::size_t heads,
                     const Tensor* additive_mask = nullptr, const PrefixKV* prefix = nullptr,
                     AttentionTrace* trace = nullptr) {
  const std::size_t h = queries.cols();
  if (keys.cols() != h || values.cols() != h || keys.rows() != values.rows()) {
    throw ShapeError("attention: query/key/value shapes differ");
  }
  if (heads == 0 || h % heads != 0) throw ShapeError("attention: hidden not divisible by heads");
  if (additive_mask && (additive_mask->rows != queries.rows() || additive_mask->cols != keys.rows())) {
    throw ShapeError("attention: mask shape mismatch");
  }
  const std::size_t lq = queries.rows();

  Var k = keys, v = values;
  std::size_t plen = 0;
  if (prefix) {
    if (prefix->keys.cols() != h || prefix->values.cols() != h || prefix->keys.rows() != prefix->values.rows()) {
      throw ShapeError("attention: prefix shape mismatch");
    }
    plen = prefix->keys.rows();
    if (prefix->key_mask && (prefix->key_mask->rows != 1 || prefix->key_mask->cols != plen)) {
      throw ShapeError("attention: prefix mask shape mismatch");
    }
    k = concat_rows(tape, prefix->keys, keys);
    v = concat_rows(tape, prefix->values, values);
  }
  const std::size_t lk = k.rows();

  // Combined mask over [prefix ; keys]; skipped entirely when nothing is masked.
  const Tensor* mask = additive_mask;
  Tensor full;
  if (prefix && (additive_mask || prefix->key_mask)) {
    full = Tensor(lq, lk);
    for (std::size_t i = 0; i < lq; ++i) {
      for (std::size_t j = 0; j < plen; ++j) full.at(i, j) = prefix->key_mask ? prefix->key_mask->data[j] : 0.0;
      for (std::size_t j = plen; j < lk; ++j) full.at(i, j) = additive_mask ? additive_mask->at(i, j - plen) : 0.0;
    }
    mask = &full;
  }

  const std::size_t dh = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    Var q_h = heads == 1 ? queries : slice_cols(tape, queries, hd * dh, (hd + 1) * dh);
    Var k_h = heads == 1 ? k : slice_cols(tape, k, hd * dh, (hd + 1) * dh);
    Var v_h = heads == 1 ? v : slice_cols(tape, v, hd * dh, (hd + 1) * dh);
    Var w = softmax_rows(tape, matmul_nt(tape, q_h, k_h), mask, scale);
    if (trace) trace->weights.push_back(Tensor(w.rows(), w.cols(), w->data));
    outs.push_back(matmul(tape, w, v_h));
  }
  return heads == 1 ? outs.front() : concat_cols(tape, outs);
}

/// Additive mask (0 / -inf) from a predicate.
template <typename Allowed>
Tensor additive_mask(std::size_t rows, std::size_t cols, Allowed&& allowed) {
  Tensor m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m.at(i, j) = allowed(i, j) ? 0.0 : kNegInf;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct Linear {
  Tensor* weight = nullptr;  // in x out
  Tensor* bias = nullptr;    // 1 x out

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    weight = &ps.create(name + ".weight", in, out);
    bias = &ps.create(name + ".bias", 1, out);
    init_normal(*weight, rng);
  }

  Var operator()(Tape& tape, Var x) const {
    return add_row(tape, matmul(tape, x, tape.watch(*weight)), tape.watch(*bias));
  }
};

struct LayerNorm {
  Tensor* gain = nullptr;
  Tensor* bias = nullptr;

  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, std::size_t dim) {
    gain = &ps.create(name + ".gain", 1, dim, 1.0);
    bias = &ps.create(name + ".bias", 1, dim);
  }

  Var operator()(Tape& tape, Var x) const { return layer_norm(tape, x, tape.watch(*gain), tape.watch(*bias)); }
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& ps, const std::string& name, std::size_t hidden, std::size_t n_heads,
                     std::mt19937_64& rng)
      : q(ps, name + ".q", hidden, hidden, rng),
        k(ps, name + ".k", hidden, hidden, rng),
        v(ps, name + ".v", hidden, hidden, rng),
        o(ps, name + ".o", hidden, hidden, rng),
        heads(n_heads) {}

  Var operator()(Tape& tape, Var query_states, Var memory, const Tensor* mask = nullptr,
                 const PrefixKV* prefix = nullptr, AttentionTrace* trace = nullptr) const {
    Var ctx = attention(tape, q(tape, query_states), k(tape, memory), v(tape, memory), heads, mask, prefix, trace);
    return o(tape, ctx);
  }
};

struct FeedForward {
  Linear up, down;

  FeedForward() = default;
  FeedForward(ParamStore& ps, const std::string& name, std::size_t hidden, std::size_t width, std::mt19937_64& rng)
      : up(ps, name + ".up", hidden, width, rng), down(ps, name + ".down", width, hidden, rng) {}

  Var operator()(Tape& tape, Var x) const { return down(tape, gelu(tape, up(tape, x))); }
};

struct EncoderLayer {
  LayerNorm ln_attn, ln_ffn;
  MultiHeadAttention self_attn;
  FeedForward ffn;
};

struct DecoderLayer {
  LayerNorm ln_self, ln_cross, ln_ffn;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ffn;
};

/// Token and position embeddings shared by both stacks, c encoder layers,
/// c decoder layers, and a final norm on each stack.
class Backbone {
 public:
  Backbone(ParamStore& ps, const ModelConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg.validate();
    token_embedding_ = &ps.create("embed.tokens", cfg.vocab_size, cfg.hidden);
    position_embedding_ = &ps.create("embed.positions", cfg.max_context, cfg.hidden);
    init_normal(*token_embedding_, rng);
    init_normal(*position_embedding_, rng);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string p = "encoder." + std::to_string(l);
      encoder_.push_back(EncoderLayer{LayerNorm(ps, p + ".ln_attn", cfg.hidden), LayerNorm(ps, p + ".ln_ffn", cfg.hidden),
                                      MultiHeadAttention(ps, p + ".self_attn", cfg.hidden, cfg.heads, rng),
                                      FeedForward(ps, p + ".ffn", cfg.hidden, cfg.ffn, rng)});
    }
    encoder_norm_ = LayerNorm(ps, "encoder.ln_final", cfg.hidden);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string p = "decoder." + std::to_string(l);
      decoder_.push_back(DecoderLayer{LayerNorm(ps, p + ".ln_self", cfg.hidden), LayerNorm(ps, p + ".ln_cross", cfg.hidden),
                                      LayerNorm(ps, p + ".ln_ffn", cfg.hidden),
                                      MultiHeadAttention(ps, p + ".self_attn", cfg.hidden, cfg.heads, rng),
                                      MultiHeadAttention(ps, p + ".cross_attn", cfg.hidden, cfg.heads, rng),
                                      FeedForward(ps, p + ".ffn", cfg.hidden, cfg.ffn, rng)});
    }
    decoder_norm_ = LayerNorm(ps, "decoder.ln_final", cfg.hidden);
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  Tensor& token_embedding() { return *token_embedding_; }

  /// Token plus absolute position embeddings for ids[0..L).
  Var embed(Tape& tape, std::span<const int> ids) const {
    if (ids.size() > cfg_.max_context) {
      throw ShapeError("context of " + std::to_string(ids.size()) + " tokens exceeds max_context " +
                       std::to_string(cfg_.max_context));
    }
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) throw ShapeError("token id out of vocabulary");
    }
    std::vector<int> positions(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
    return add(tape, embedding(tape, tape.watch(*token_embedding_), ids),
               embedding(tape, tape.watch(*position_embedding_), positions));
  }

  Var encoder_forward(Tape& tape, std::span<const int> ids, const Tensor* mask = nullptr,
                      const PrefixPack* prefix = nullptr, AttentionTrace* trace = nullptr) const {
    check_pack(prefix);
    Var x = embed(tape, ids);
    for (std::size_t l = 0; l < encoder_.size(); ++l) {
      const auto& layer = encoder_[l];
      const PrefixKV* p = prefix ? &prefix->layers[l] : nullptr;
      Var n = layer.ln_attn(tape, x);
      x = add(tape, x, layer.self_attn(tape, n, n, mask, p, trace));
      x = add(tape, x, layer.ffn(tape, layer.ln_ffn(tape, x)));
    }
    return encoder_norm_(tape, x);
  }

  /// Bidirectional decoder: self-attention (optional prefix and mask), then
  /// cross-attention over `memory`, then feed-forward. Continuous inputs get
  /// no extra position embeddings.
  Var decoder_forward(Tape& tape, Var input, Var memory, const PrefixPack* prefix = nullptr,
                      const Tensor* mask = nullptr, AttentionTrace* self_trace = nullptr) const {
    check_pack(prefix);
    if (input.cols() != cfg_.hidden || memory.cols() != cfg_.hidden) throw ShapeError("decoder: hidden size mismatch");
    Var x = input;
    for (std::size_t l = 0; l < decoder_.size(); ++l) {
      const auto& layer = decoder_[l];
      const PrefixKV* p = prefix ? &prefix->layers[l] : nullptr;
      Var n = layer.ln_self(tape, x);
      x = add(tape, x, layer.self_attn(tape, n, n, mask, p, self_trace));
      x = add(tape, x, layer.cross_attn(tape, layer.ln_cross(tape, x), memory));
      x = add(tape, x, layer.ffn(tape, layer.ln_ffn(tape, x)));
    }
    return decoder_norm_(tape, x);
  }

 private:
  void check_pack(const PrefixPack* prefix) const {
    if (prefix && prefix->layers.size() != cfg_.layers) {
      throw ShapeError("prefix pack has " + std::to_string(prefix->layers.size()) + " layers, model has " +
                       std::to_string(cfg_.layers));
    }
  }

  ModelConfig cfg_;
  Tensor* token_embedding_ = nullptr;
  Tensor* position_embedding_ = nullptr;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  LayerNorm encoder_norm_, decoder_norm_;
};

}  // namespace cseae::nn
