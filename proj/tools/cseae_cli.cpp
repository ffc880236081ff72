// cseae: validate, stats, train, predict, evaluate, export-sft.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cseae/config.hpp"
#include "cseae/corpus.hpp"
#include "cseae/errors.hpp"
#include "cseae/metrics.hpp"
#include "cseae/model.hpp"
#include "cseae/templates.hpp"
#include "cseae/training.hpp"

namespace {

using namespace cseae;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Args {
  std::string config;
  std::vector<std::string> corpora;
  std::string templates;
  std::string out;
  std::string checkpoint;
  std::string predictions;
  std::string buckets;
  std::optional<std::uint64_t> seed;
  bool use_structure = true;
  bool use_co = true;
  bool cs_mode = false;
  CLI::Option* use_structure_opt = nullptr;
  CLI::Option* use_co_opt = nullptr;
};

std::string first_corpus(const Args& a) {
  if (a.corpora.empty()) throw CLI::ValidationError("--corpus", "required");
  return a.corpora.front();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

RunConfig run_config(const Args& a) {
  RunConfig c = resolve_config(a.config);
  if (!a.corpora.empty()) c.corpus = a.corpora.front();
  if (!a.templates.empty()) c.templates = a.templates;
  if (!a.out.empty()) c.out = a.out;
  if (a.seed) c.model.seed = *a.seed;
  if (a.use_structure_opt->count()) c.ablation.use_structure = a.use_structure;
  if (a.use_co_opt->count()) c.ablation.use_co = a.use_co;
  if (c.corpus.empty() || c.templates.empty() || c.out.empty()) {
    throw CLI::ValidationError("train", "corpus, templates and out must be set by flag, config, or environment");
  }
  return c;
}

int cmd_validate(const Args& a) {
  Corpus corpus = load_corpus(first_corpus(a));
  std::size_t events = 0;
  for (const auto& d : corpus) events += d.events.size();
  if (!a.templates.empty()) validate_roles(corpus, load_templates(a.templates));
  std::cout << "ok: " << corpus.size() << " documents, " << events << " events\n";
  return kExitOk;
}

int cmd_stats(const Args& a) {
  CorpusStats st = corpus_stats(load_corpus(first_corpus(a)));
  nlohmann::json j{{"documents", st.document_count},
                   {"events", st.event_count},
                   {"arguments", st.argument_count},
                   {"same_sentence_arguments", st.same_sentence_argument_count},
                   {"same_sentence_fraction", st.same_sentence_argument_fraction}};
  for (const auto& [k, v] : st.events_per_document) j["events_per_document"][std::to_string(k)] = v;
  for (const auto& [k, v] : st.argument_distance) j["argument_distance"][std::to_string(k)] = v;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_train(const Args& a) {
  RunConfig cfg = run_config(a);
  Corpus corpus = load_corpus(cfg.corpus);
  TemplateSet templates = load_templates(cfg.templates);
  validate_roles(corpus, templates);

  CsEaeModel model(cfg.model, Vocabulary::build(corpus, templates, cfg.marker_labels));
  auto instances = prepare_corpus(corpus, templates, model.vocabulary(), model.config(), cfg.max_span_length);
  std::size_t truncated = 0;
  for (const auto& p : instances) truncated += p.co_prompt_truncated != 0;
  if (truncated) std::cerr << "warning: " << truncated << " co-occurrence prompts truncated to max_context\n";

  fs::create_directories(cfg.out);
  auto log = open_out((fs::path(cfg.out) / "train_log.jsonl").string());
  TrainResult res = train(model, instances, corpus, cfg.train_options(), [&](const StepRecord& r) {
    log << nlohmann::json{{"step", r.step}, {"loss", r.loss}}.dump() << '\n';
  });
  if (res.overflow) std::cerr << "warning: " << res.overflow << " gold arguments exceed their role's slots\n";

  CheckpointMeta meta{cfg.ablation, cfg.max_span_length, res.log.size()};
  save_checkpoint((fs::path(cfg.out) / "checkpoint.json").string(), model, meta);
  open_out((fs::path(cfg.out) / "config.json").string()) << to_json(cfg).dump(2) << '\n';

  std::cout << "steps " << res.log.size() << ", final loss " << res.log.back().loss;
  if (res.last_arg_c_f1) std::cout << ", train Arg-C F1 " << *res.last_arg_c_f1;
  std::cout << '\n';
  return kExitOk;
}

int cmd_predict(const Args& a) {
  if (a.checkpoint.empty() || a.templates.empty() || a.out.empty()) {
    throw CLI::ValidationError("predict", "--checkpoint, --templates and --out are required");
  }
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  Corpus corpus = load_corpus(first_corpus(a));
  TemplateSet templates = load_templates(a.templates);
  validate_roles(corpus, templates);
  auto instances = prepare_corpus(corpus, templates, ck.model->vocabulary(), ck.model->config(),
                                  ck.meta.max_span_length);
  auto preds = predict(*ck.model, instances, ck.meta.ablation);
  auto out = open_out(a.out);
  write_predictions(out, preds);
  std::cout << preds.size() << " predictions\n";
  return kExitOk;
}

int cmd_evaluate(const Args& a) {
  if (a.predictions.empty()) throw CLI::ValidationError("evaluate", "--predictions is required");
  Corpus gold = load_corpus(first_corpus(a));
  auto preds = load_predictions(a.predictions);
  std::optional<Bucketing> b;
  if (a.buckets == "overlap") b = Bucketing::kOverlap;
  else if (a.buckets == "distance") b = Bucketing::kDistance;
  else if (a.buckets == "same-sentence") b = Bucketing::kSameSentence;
  EvalReport r = score_with_buckets(gold, preds, b);
  std::cout << render_table(r);
  if (!a.out.empty()) open_out(a.out) << to_json(r).dump(2) << '\n';
  return kExitOk;
}

int cmd_export_sft(const Args& a) {
  if (a.corpora.empty() || a.templates.empty() || a.out.empty()) {
    throw CLI::ValidationError("export-sft", "--corpus, --templates and --out are required");
  }
  std::vector<Corpus> corpora;
  for (const auto& p : a.corpora) corpora.push_back(load_corpus(p));
  std::vector<const Corpus*> ptrs;
  for (const auto& c : corpora) ptrs.push_back(&c);
  TemplateSet templates = load_templates(a.templates);
  for (const auto& c : corpora) validate_roles(c, templates);
  std::cout << export_sft(ptrs, templates, a.cs_mode, a.out) << " records\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Document-level event argument extraction"};
  app.require_subcommand(1);
  Args a;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "flat key = value config file");
    sub->add_option("--corpus", a.corpora, "normalized JSONL corpus (repeatable for export-sft)");
    sub->add_option("--templates", a.templates, "prompt templates JSONL");
    sub->add_option("--out", a.out, "output path");
    sub->add_option("--seed", a.seed, "random seed");
    a.use_structure_opt = sub->add_flag("--use-structure,!--no-use-structure", a.use_structure);
    a.use_co_opt = sub->add_flag("--use-co,!--no-use-co", a.use_co);
    sub->add_flag("--cs-mode", a.cs_mode, "mark trigger and target sentence in LLM prompts");
    sub->add_option("--checkpoint", a.checkpoint, "checkpoint JSON");
    sub->add_option("--predictions", a.predictions, "predictions JSONL");
    sub->add_option("--buckets", a.buckets)->check(CLI::IsMember({"overlap", "distance", "same-sentence"}));
  };

  std::vector<std::pair<CLI::App*, int (*)(const Args&)>> commands{
      {app.add_subcommand("validate", "check a corpus (and its roles against templates)"), cmd_validate},
      {app.add_subcommand("stats", "corpus statistics"), cmd_stats},
      {app.add_subcommand("train", "train and write checkpoint, log, resolved config"), cmd_train},
      {app.add_subcommand("predict", "write predictions JSONL"), cmd_predict},
      {app.add_subcommand("evaluate", "score predictions against gold"), cmd_evaluate},
      {app.add_subcommand("export-sft", "write instruction-tuning JSONL"), cmd_export_sft},
  };
  // Each subcommand gets its own option objects; the flag handles follow the parsed one.
  std::vector<std::pair<CLI::Option*, CLI::Option*>> flag_opts;
  for (auto& [sub, fn] : commands) {
    add_common(sub);
    flag_opts.emplace_back(a.use_structure_opt, a.use_co_opt);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (std::size_t i = 0; i < commands.size(); ++i) {
      if (commands[i].first->parsed()) {
        a.use_structure_opt = flag_opts[i].first;
        a.use_co_opt = flag_opts[i].second;
        return commands[i].second(a);
      }
    }
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
