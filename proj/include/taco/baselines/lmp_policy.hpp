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

// Plan-following control. A plan source proposes one squashed latent every
// replan interval; the frozen decoder turns it into primitive actions with
// a hidden state that starts fresh at each replan.

#include <vector>

#include "taco/baselines/policy.hpp"
#include "taco/lmp/model.hpp"

namespace taco {

class PlanPolicy : public GoalPolicy {
 public:
  PlanPolicy(const LmpModel& model, int replan_interval = kWindowLen - 1)
      : model_(&model), interval_(replan_interval) {
    PlanPolicy::reset();
  }

  void reset() override {
    steps_ = 0;
    plans_ = 0;
    plan_.clear();
    state_ = model_->decoder().make_state(1);
  }

  // Greedy decode every step; replan fires at steps 0, interval, 2*interval.
  EnvAction act(const Observation& s, const Observation& s_g) override {
    if (steps_ % interval_ == 0) {
      plan_ = propose(s, s_g);
      state_ = model_->decoder().make_state(1);
      ++plans_;
    }
    ++steps_;
    return model_->decoder().act(s, plan_, state_, /*greedy=*/true, nullptr);
  }

  long steps_taken() const { return steps_; }
  long plans_drawn() const { return plans_; }
  const std::vector<double>& current_plan() const { return plan_; }

 protected:
  // Returns a plan already squashed into (-1, 1)^latent.
  virtual std::vector<double> propose(const Observation& s,
                                      const Observation& s_g) = 0;

  const LmpModel& model() const { return *model_; }

 private:
  const LmpModel* model_;
  int interval_;
  long steps_ = 0;
  long plans_ = 0;
  std::vector<double> plan_;
  std::vector<Tensor> state_;
};

// Goal-conditioned imitation: plans come from the trained prior, squashed
// mean in deterministic mode and one reparameterized draw otherwise.
class LmpPolicy : public PlanPolicy {
 public:
  LmpPolicy(const LmpModel& model, bool deterministic, uint64_t seed,
            int replan_interval = kWindowLen - 1)
      : PlanPolicy(model, replan_interval),
        deterministic_(deterministic),
        rng_(Rng::derive(seed, "lmp/policy")) {}

 protected:
  std::vector<double> propose(const Observation& s,
                              const Observation& s_g) override {
    GaussHead d = model().prior()(
        Tensor::constant({1, kObsDim},
                         std::vector<double>(s.begin(), s.end())),
        Tensor::constant({1, kObsDim},
                         std::vector<double>(s_g.begin(), s_g.end())));
    std::vector<double> z =
        deterministic_ ? d.mean.value() : reparam_sample(d, rng_).value();
    for (double& v : z) v = std::tanh(v);
    return z;
  }

 private:
  bool deterministic_;
  Rng rng_;
};

}  // namespace taco
