#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cseae/errors.hpp"
#include "cseae/nn/tensor.hpp"

namespace cseae::nn {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Five-point stencil (f(x-2e), f(x-e), f(x+e), f(x+2e)) instead of the two-point one.
  bool fourth_order = false;
  // Coordinates compared; every coordinate when the parameters hold fewer.
  std::size_t coordinates = 256;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double denominator_floor = 1e-6;
  std::uint64_t seed = 7;
  // Test hook: may alter the analytic gradient of parameter i before comparison.
  std::function<void(std::size_t, std::vector<double>&)> tamper;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Builds a scalar loss on a tape from the given parameters.
using LossBuilder = std::function<Var(Tape&)>;

/// Central finite differences on a sampled subset of parameter coordinates
/// against reverse-mode gradients.
inline GradCheckResult grad_check(std::span<Tensor* const> params, const LossBuilder& build,
                                  const GradCheckOptions& opt = {}) {
  if (!(opt.epsilon > 0.0 && opt.epsilon <= 1e-2)) throw std::invalid_argument("grad_check: epsilon must be in (0, 1e-2]");

  for (Tensor* p : params) p->zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Tape tape(true);
    Var loss = build(tape);
    if (!std::isfinite(loss->data[0])) throw NumericError("grad_check: non-finite loss");
    tape.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
      analytic.push_back(params[i]->grad);
      if (opt.tamper) opt.tamper(i, analytic.back());
    }
  }

  auto evaluate = [&] {
    Tape tape(false);
    double v = build(tape)->data[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss under perturbation");
    return v;
  };

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i]->size(); ++j) coords.emplace_back(i, j);
  }
  if (coords.size() > opt.coordinates) {
    std::mt19937_64 rng(opt.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opt.coordinates);
  }

  GradCheckResult res;
  for (auto [pi, j] : coords) {
    double& x = params[pi]->data[j];
    const double saved = x;
    auto at = [&](double offset) {
      x = saved + offset;
      return evaluate();
    };
    const double e = opt.epsilon;
    const double numeric = opt.fourth_order
                               ? (8.0 * (at(e) - at(-e)) - (at(2.0 * e) - at(-2.0 * e))) / (12.0 * e)
                               : (at(e) - at(-e)) / (2.0 * e);
    x = saved;
    const double a = analytic[pi][j];
    const double denom = std::max({std::abs(a), std::abs(numeric), opt.denominator_floor});
    const double rel = std::abs(a - numeric) / denom;
    ++res.coordinates_checked;
    if (rel > res.max_relative_error || res.coordinates_checked == 1) {
      res.max_relative_error = rel;
      res.worst_param = pi;
      res.worst_index = j;
      res.worst_analytic = a;
      res.worst_numeric = numeric;
    }
  }
  return res;
}

}  // namespace cseae::nn
