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

#include "taco/env/playtable.hpp"

namespace taco {

// Anything that turns (current observation, goal observation) into a
// primitive action. Policies are stateful across a rollout; reset() starts
// a fresh one.
class GoalPolicy {
 public:
  virtual ~GoalPolicy() = default;
  virtual void reset() = 0;
  virtual EnvAction act(const Observation& s, const Observation& s_g) = 0;
};

}  // namespace taco
