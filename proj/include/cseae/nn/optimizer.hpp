#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cseae/nn/backbone.hpp"

namespace cseae::nn {

struct AdamWOptions {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Consumes and does not clear gradients.
class AdamW {
 public:
  AdamW(ParamStore& params, AdamWOptions opt) : params_(params), opt_(opt) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params.at(i).size(), 0.0);
      v_.emplace_back(params.at(i).size(), 0.0);
    }
  }

  const AdamWOptions& options() const noexcept { return opt_; }
  std::size_t steps() const noexcept { return step_; }

  void step() {
    ++step_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_.at(i);
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double g = p.grad[j];
        m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g;
        v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g * g;
        const double mhat = m[j] / c1;
        const double vhat = v[j] / c2;
        p.data[j] -= opt_.lr * (mhat / (std::sqrt(vhat) + opt_.eps) + opt_.weight_decay * p.data[j]);
      }
    }
  }

 private:
  ParamStore& params_;
  AdamWOptions opt_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace cseae::nn
