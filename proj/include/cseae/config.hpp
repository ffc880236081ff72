#pragma once

// Run configuration: a flat `key = value` file, overridden by CSEAE_<KEY>
// environment variables, overridden by command-line flags.

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cseae/errors.hpp"
#include "cseae/model.hpp"
#include "cseae/training.hpp"

namespace cseae {

struct RunConfig {
  nn::ModelConfig model;
  nn::AdamWOptions adam;
  std::size_t steps = 300;
  std::size_t eval_every = 10;
  bool stop_at_perfect = false;
  std::size_t max_span_length = kDefaultMaxSpanLength;
  std::size_t marker_labels = 16;
  Ablation ablation;
  std::string corpus;
  std::string templates;
  std::string out;

  TrainOptions train_options() const {
    TrainOptions t;
    t.steps = steps;
    t.adam = adam;
    t.ablation = ablation;
    t.eval_every = eval_every;
    t.stop_at_perfect = stop_at_perfect;
    return t;
  }
};

/// Every key the config file and environment accept.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "hidden", "layers",          "heads",         "ffn",        "max_context",   "prefix_len",
      "seed",   "lr",              "weight_decay",  "beta1",      "beta2",         "adam_eps",
      "steps",  "eval_every",      "stop_at_perfect", "max_span_length", "marker_labels",
      "use_structure", "use_co",   "corpus",        "templates",  "out"};
  return keys;
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const unsigned long long n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DataError("config key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::string env_name(const std::string& key) {
  std::string out = "CSEAE_";
  for (char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

/// Applies one setting; unknown keys are a data error.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "hidden") c.model.hidden = to_size(key, value);
  else if (key == "layers") c.model.layers = to_size(key, value);
  else if (key == "heads") c.model.heads = to_size(key, value);
  else if (key == "ffn") c.model.ffn = to_size(key, value);
  else if (key == "max_context") c.model.max_context = to_size(key, value);
  else if (key == "prefix_len") c.model.prefix_len = to_size(key, value);
  else if (key == "seed") c.model.seed = to_size(key, value);
  else if (key == "lr") c.adam.lr = to_double(key, value);
  else if (key == "weight_decay") c.adam.weight_decay = to_double(key, value);
  else if (key == "beta1") c.adam.beta1 = to_double(key, value);
  else if (key == "beta2") c.adam.beta2 = to_double(key, value);
  else if (key == "adam_eps") c.adam.eps = to_double(key, value);
  else if (key == "steps") c.steps = to_size(key, value);
  else if (key == "eval_every") c.eval_every = to_size(key, value);
  else if (key == "stop_at_perfect") c.stop_at_perfect = to_bool(key, value);
  else if (key == "max_span_length") c.max_span_length = to_size(key, value);
  else if (key == "marker_labels") c.marker_labels = to_size(key, value);
  else if (key == "use_structure") c.ablation.use_structure = to_bool(key, value);
  else if (key == "use_co") c.ablation.use_co = to_bool(key, value);
  else if (key == "corpus") c.corpus = value;
  else if (key == "templates") c.templates = value;
  else if (key == "out") c.out = value;
  else throw DataError("unknown config key '" + key + "'");
}

/// `key = value` lines; blank lines and `#` comments are skipped.
inline std::map<std::string, std::string> parse_config_text(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("expected key = value", n);
    std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw DataError("empty config key", n);
    kv[key] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

/// File values, then environment overrides.
inline RunConfig resolve_config(const std::string& path) {
  RunConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config '" + path + "'");
    for (const auto& [k, v] : parse_config_text(in)) set_config_value(c, k, v);
  }
  for (const auto& key : config_keys()) {
    if (const char* v = std::getenv(detail::env_name(key).c_str())) set_config_value(c, key, v);
  }
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = config_to_json(c.model);
  j.erase("vocab_size");
  j["lr"] = c.adam.lr;
  j["weight_decay"] = c.adam.weight_decay;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["adam_eps"] = c.adam.eps;
  j["steps"] = c.steps;
  j["eval_every"] = c.eval_every;
  j["stop_at_perfect"] = c.stop_at_perfect;
  j["max_span_length"] = c.max_span_length;
  j["marker_labels"] = c.marker_labels;
  j["use_structure"] = c.ablation.use_structure;
  j["use_co"] = c.ablation.use_co;
  j["corpus"] = c.corpus;
  j["templates"] = c.templates;
  j["out"] = c.out;
  return j;
}

}  // namespace cseae
