// Copyright 2026 The tacorl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "taco/core/tensor.hpp"

namespace taco {

// Raised when training hits non-finite numbers or a runaway loss; the CLI
// maps it to its own exit status.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what)
      : std::runtime_error(what) {}
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Parameters without a populated gradient for
// the current step are skipped (their moments do not advance).
class Adam {
 public:
  Adam(ParamList params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].tensor.size(), 0.0);
      v_[i].assign(params_[i].tensor.size(), 0.0);
    }
  }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor& t = params_[i].tensor;
      if (!t.has_grad()) continue;
      const std::vector<double>& g = t.grad();
      std::vector<double>& val = t.raw_value();
      for (size_t j = 0; j < g.size(); ++j) {
        if (!std::isfinite(g[j]))
          throw DivergenceError("adam: non-finite gradient in parameter '" +
                                params_[i].name + "' at element " +
                                std::to_string(j));
        m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
        v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        val[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  const ParamList& params() const { return params_; }
  long step_count() const { return step_; }
  void set_step_count(long s) { step_ = s; }
  std::vector<std::vector<double>>& moments_m() { return m_; }
  std::vector<std::vector<double>>& moments_v() { return v_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  ParamList params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long step_ = 0;
};

// Global L2 norm over the populated gradients of a parameter list.
inline double global_grad_norm(const ParamList& params) {
  double acc = 0.0;
  for (const NamedParam& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (const double g : p.tensor.grad()) acc += g * g;
  }
  return std::sqrt(acc);
}

}  // namespace taco
