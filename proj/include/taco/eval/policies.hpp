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

// Plan sources used at evaluation time. All of them drive the shared frozen
// decoder through PlanPolicy; only where the latent comes from differs.

#include <cmath>
#include <cstdint>
#include <vector>

#include "taco/baselines/lmp_policy.hpp"
#include "taco/core/rng.hpp"
#include "taco/hrl/cql.hpp"
#include "taco/lmp/model.hpp"

namespace taco {

// Plans come from the conservative high-level actor conditioned on
// (current, goal). Deterministic mode takes the squashed mean, which is how
// the actor is meant to be read at evaluation; otherwise one squashed
// reparameterized draw per replan.
class TacoPolicy : public PlanPolicy {
 public:
  TacoPolicy(const LmpModel& decoder_model, const HrlModel& actor_model,
             bool deterministic = true, uint64_t seed = 0,
             int replan_interval = kWindowLen - 1)
      : PlanPolicy(decoder_model, replan_interval),
        actor_model_(&actor_model),
        deterministic_(deterministic),
        rng_(Rng::derive(seed, "taco/policy")) {}

 protected:
  std::vector<double> propose(const Observation& s,
                              const Observation& s_g) override {
    GaussHead d = actor_model_->actor()(
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
  const HrlModel* actor_model_;
  bool deterministic_;
  Rng rng_;
};

// Control that keeps the decoder but ignores the goal: one uniform draw
// from the plan cube per replan. Whatever it achieves is what the decoder
// does on its own, so a trained plan source has to beat it.
class RandomPlanPolicy : public PlanPolicy {
 public:
  RandomPlanPolicy(const LmpModel& model, uint64_t seed,
                   int replan_interval = kWindowLen - 1)
      : PlanPolicy(model, replan_interval),
        rng_(Rng::derive(seed, "random/policy")) {}

 protected:
  std::vector<double> propose(const Observation&,
                              const Observation&) override {
    std::vector<double> z(static_cast<size_t>(model().sizes().latent));
    for (double& v : z) v = rng_.uniform(-1.0, 1.0);
    return z;
  }

 private:
  Rng rng_;
};

}  // namespace taco
