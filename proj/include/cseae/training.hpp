#pragma once

// Full-batch training and span prediction.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cseae/decoding.hpp"
#include "cseae/errors.hpp"
#include "cseae/metrics.hpp"
#include "cseae/model.hpp"
#include "cseae/nn/optimizer.hpp"

namespace cseae {

struct TrainOptions {
  std::size_t steps = 300;
  nn::AdamWOptions adam;
  Ablation ablation;
  std::size_t eval_every = 10;  // 0 disables evaluation
  bool stop_at_perfect = false;
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> log;
  std::optional<std::size_t> perfect_step;  // first evaluated step with Arg-C F1 = 1
  std::optional<double> last_arg_c_f1;
  std::size_t overflow = 0;  // gold arguments without a slot, summed over the last step
};

/// Predicted arguments for one prepared instance.
inline std::vector<Prediction> predict_instance(const CsEaeModel& model, const PreparedInstance& p,
                                                Ablation ablation) {
  nn::Tape tape(false);
  ForwardResult fr = model.forward(tape, p, ablation);
  const auto selectors = fr.selectors();
  const Document& doc = p.instance.document();
  std::vector<Prediction> out;
  for (const auto& rs : predict_event(selectors, p.candidates, p.labeled)) {
    out.push_back({doc.doc_id, p.ref.event, rs.role, rs.span, doc.text(rs.span)});
  }
  return out;
}

inline std::vector<Prediction> predict(const CsEaeModel& model, const std::vector<PreparedInstance>& instances,
                                       Ablation ablation) {
  std::vector<Prediction> out;
  for (const auto& p : instances) {
    auto preds = predict_instance(model, p, ablation);
    out.insert(out.end(), preds.begin(), preds.end());
  }
  return out;
}

/// Loss summed over all instances; parameter gradients are accumulated.
inline double accumulate_loss(const CsEaeModel& model, const std::vector<PreparedInstance>& instances,
                              Ablation ablation, std::size_t* overflow = nullptr) {
  double total = 0.0;
  for (const auto& p : instances) {
    nn::Tape tape;
    ForwardResult fr = model.forward(tape, p, ablation);
    SlotTargets targets = assign_targets(fr.selectors(), p);
    nn::Var loss = span_loss(tape, fr.slots, targets.spans);
    tape.backward(loss);
    total += loss->data[0];
    if (overflow) *overflow += targets.overflow;
  }
  return total;
}

inline TrainResult train(CsEaeModel& model, const std::vector<PreparedInstance>& instances, const Corpus& gold,
                         const TrainOptions& opt, const std::function<void(const StepRecord&)>& on_step = {}) {
  if (instances.empty()) throw DataError("no training instances");
  nn::AdamW adam(model.params(), opt.adam);
  TrainResult res;
  for (std::size_t step = 1; step <= opt.steps; ++step) {
    model.params().zero_grad();
    std::size_t overflow = 0;
    const double loss = accumulate_loss(model, instances, opt.ablation, &overflow);
    if (!std::isfinite(loss)) throw NumericError("non-finite loss at step " + std::to_string(step));
    adam.step();
    res.overflow = overflow;
    res.log.push_back({step, loss});
    if (on_step) on_step(res.log.back());
    if (opt.eval_every != 0 && (step % opt.eval_every == 0 || step == opt.steps)) {
      const double f1 = score(gold, predict(model, instances, opt.ablation)).arg_c.f1();
      res.last_arg_c_f1 = f1;
      if (f1 == 1.0 && !res.perfect_step) {
        res.perfect_step = step;
        if (opt.stop_at_perfect) break;
      }
    }
  }
  return res;
}

}  // namespace cseae
