// dmenc/optimizer.hpp

// Copyright 2026  dmenc authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef DMENC_OPTIMIZER_HPP_
#define DMENC_OPTIMIZER_HPP_

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dmenc/common.hpp"
#include "dmenc/tape.hpp"

namespace dmenc {

struct OptimizerConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  int64_t warmup_steps = 500;
  double clip_norm = 5.0;
};

// Linear warmup to the base rate, then inverse-sqrt decay. step is 1-based.
inline double lr_at(const OptimizerConfig& cfg, int64_t step) {
  DMENC_CHECK(step >= 1, "lr schedule needs a 1-based step");
  const double w = static_cast<double>(std::max<int64_t>(cfg.warmup_steps, 1));
  const double s = static_cast<double>(step);
  return cfg.lr * std::min(s / w, std::sqrt(w / s));
}

// Adam over a fixed set of named tape parameters. The parameter list is
// captured at construction; moments are keyed by name for checkpointing.
template <typename S>
class Adam {
 public:
  Adam(OptimizerConfig cfg, std::vector<std::pair<std::string, tape::Var<S>*>> params)
      : cfg_(cfg), params_(std::move(params)) {
    for (auto& [name, v] : params_) {
      m_.push_back(Mat<S>::Zero(v->rows(), v->cols()));
      v2_.push_back(Mat<S>::Zero(v->rows(), v->cols()));
    }
  }

  int64_t step_count() const { return step_; }
  void set_step_count(int64_t s) { step_ = s; }

  double grad_norm() const {
    double sq = 0;
    for (auto& [name, v] : params_) {
      if (v->grad().size() == 0) continue;
      sq += static_cast<double>(v->grad().template cast<double>().squaredNorm());
    }
    return std::sqrt(sq);
  }

  // One update from the accumulated gradients; clears them afterwards.
  // Returns the pre-clip global gradient norm.
  double step() {
    ++step_;
    const double norm = grad_norm();
    const double clip =
        (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
    const double lr = lr_at(cfg_, step_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* var = params_[i].second;
      if (var->grad().size() == 0) continue;
      Mat<S> g = var->grad() * static_cast<S>(clip);
      m_[i] = static_cast<S>(cfg_.beta1) * m_[i] + static_cast<S>(1.0 - cfg_.beta1) * g;
      v2_[i] = static_cast<S>(cfg_.beta2) * v2_[i] +
               static_cast<S>(1.0 - cfg_.beta2) * g.cwiseProduct(g);
      Mat<S> mhat = m_[i] / static_cast<S>(bc1);
      Mat<S> vhat = v2_[i] / static_cast<S>(bc2);
      var->mutable_value() -=
          (static_cast<S>(lr) * mhat.array() /
           (vhat.array().sqrt() + static_cast<S>(cfg_.eps)))
              .matrix();
      var->reset_grad();
    }
    return norm;
  }

  void zero_grad() {
    for (auto& [name, v] : params_) v->reset_grad();
  }

  // Moment tensors for checkpointing, named after their parameters.
  std::vector<std::pair<std::string, Mat<S>*>> named_state() {
    std::vector<std::pair<std::string, Mat<S>*>> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.emplace_back("adam.m." + params_[i].first, &m_[i]);
      out.emplace_back("adam.v." + params_[i].first, &v2_[i]);
    }
    return out;
  }

  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<std::pair<std::string, tape::Var<S>*>> params_;
  std::vector<Mat<S>> m_, v2_;
  int64_t step_ = 0;
};

}  // namespace dmenc

#endif  // DMENC_OPTIMIZER_HPP_
