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

// Scripted play data collection. A proportional controller chases waypoint
// targets while a small state machine sequences affordances; Gaussian noise
// on the commanded deltas keeps trajectories diverse. The same machinery,
// run without noise and with margin targets, doubles as the task oracle the
// evaluation harness uses to synthesize reachable goals.

#include <string>
#include <vector>

#include "taco/core/rng.hpp"
#include "taco/env/playtable.hpp"

namespace taco {

enum class Affordance {
  OpenDrawer,
  CloseDrawer,
  MoveSlider,
  PressButton,
  PickBlock,
  PlaceBlock,
};

inline const char* affordance_name(Affordance a) {
  switch (a) {
    case Affordance::OpenDrawer: return "open_drawer";
    case Affordance::CloseDrawer: return "close_drawer";
    case Affordance::MoveSlider: return "move_slider";
    case Affordance::PressButton: return "press_button";
    case Affordance::PickBlock: return "pick_block";
    case Affordance::PlaceBlock: return "place_block";
  }
  return "?";
}

// Action span [step_start, step_end) of one affordance within an episode.
struct AffordanceSpan {
  int episode = 0;
  int step_start = 0;
  int step_end = 0;
  std::string affordance;
};

constexpr double kApproachTol = 0.02;
constexpr double kArticulationTol = 0.02;

// Waypoint chaser: emits a delta proportional to the remaining distance.
// The environment clips the magnitude, so far targets move at full speed.
inline EnvAction move_toward(const EnvState& s, double tx, double ty,
                             double gripper, double gain) {
  return {gain * (tx - s.eff_x), gain * (ty - s.eff_y), gripper};
}

// One affordance attempt: approach, engage, manipulate, release. Phases
// advance on observed state, so a failed engagement simply stalls until the
// caller's step cap abandons the attempt.
class PlayScript {
 public:
  static PlayScript make(Affordance kind, Rng& rng) {
    PlayScript sc;
    sc.kind_ = kind;
    switch (kind) {
      case Affordance::OpenDrawer:
        sc.target_ = rng.uniform(0.82, 1.0);
        break;
      case Affordance::CloseDrawer:
        sc.target_ = rng.uniform(0.0, 0.18);
        break;
      case Affordance::MoveSlider:
        sc.target_ = rng.uniform01();
        break;
      case Affordance::PlaceBlock:
        sc.tx_ = rng.uniform(0.1, 0.9);
        sc.ty_ = rng.uniform(0.1, 0.9);
        break;
      default:
        break;
    }
    return sc;
  }

  // Noise-free variant with explicit targets, for the task oracle.
  static PlayScript make_with_target(Affordance kind, double target,
                                     double tx = 0.0, double ty = 0.0) {
    PlayScript sc;
    sc.kind_ = kind;
    sc.target_ = target;
    sc.tx_ = tx;
    sc.ty_ = ty;
    return sc;
  }

  Affordance kind() const { return kind_; }
  bool finished() const { return finished_; }
  int steps_taken() const { return steps_taken_; }

  EnvAction step(const EnvState& s, double gain) {
    ++steps_taken_;
    switch (kind_) {
      case Affordance::OpenDrawer:
      case Affordance::CloseDrawer: {
        if (phase_ == 0) {
          if (near(s, drawer_handle_x(s), drawer_handle_y(s)))
            phase_ = 1;
          else
            return move_toward(s, drawer_handle_x(s), drawer_handle_y(s), -1.0,
                               gain);
        }
        if (phase_ == 1) {
          if (std::abs(s.drawer - target_) <= kArticulationTol)
            phase_ = 2;
          else
            // Drive the articulation error, not the handle's end pose: the
            // effector grips with a fixed offset that would otherwise be
            // folded into the stop condition.
            return {gain * (drawer_handle_x(s) - s.eff_x),
                    gain * kDrawerTravel * (target_ - s.drawer), 1.0};
        }
        finished_ = true;
        return {0.0, 0.0, -1.0};
      }
      case Affordance::MoveSlider: {
        if (phase_ == 0) {
          if (near(s, slider_handle_x(s), slider_handle_y(s)))
            phase_ = 1;
          else
            return move_toward(s, slider_handle_x(s), slider_handle_y(s), -1.0,
                               gain);
        }
        if (phase_ == 1) {
          if (std::abs(s.slider - target_) <= kArticulationTol)
            phase_ = 2;
          else
            return {gain * kSliderTravel * (target_ - s.slider),
                    gain * (slider_handle_y(s) - s.eff_y), 1.0};
        }
        finished_ = true;
        return {0.0, 0.0, -1.0};
      }
      case Affordance::PressButton: {
        if (phase_ == 0) {
          if (near(s, kButtonX, kButtonY))
            phase_ = 1;
          else
            return move_toward(s, kButtonX, kButtonY, -1.0, gain);
        }
        if (phase_ == 1) {
          phase_ = 2;
          return {0.0, 0.0, 1.0};  // open -> closed toggles the light
        }
        finished_ = true;
        return {0.0, 0.0, -1.0};
      }
      case Affordance::PickBlock: {
        if (phase_ == 0) {
          if (near(s, s.block_x, s.block_y))
            phase_ = 1;
          else
            return move_toward(s, s.block_x, s.block_y, -1.0, gain);
        }
        finished_ = true;
        return {0.0, 0.0, 1.0};  // closing transition grasps
      }
      case Affordance::PlaceBlock: {
        if (phase_ == 0) {
          if (s.held > 0.5)
            phase_ = 2;
          else if (near(s, s.block_x, s.block_y))
            phase_ = 1;
          else
            return move_toward(s, s.block_x, s.block_y, -1.0, gain);
        }
        if (phase_ == 1) {
          phase_ = 2;
          return {0.0, 0.0, 1.0};
        }
        if (phase_ == 2) {
          if (near(s, tx_, ty_))
            phase_ = 3;
          else
            return move_toward(s, tx_, ty_, 1.0, gain);
        }
        finished_ = true;
        return {0.0, 0.0, -1.0};
      }
    }
    finished_ = true;
    return {0.0, 0.0, -1.0};
  }

 private:
  static bool near(const EnvState& s, double tx, double ty) {
    return detail::dist2d(s.eff_x, s.eff_y, tx, ty) <= kApproachTol;
  }

  Affordance kind_ = Affordance::PressButton;
  int phase_ = 0;
  int steps_taken_ = 0;
  bool finished_ = false;
  double target_ = 0.0;
  double tx_ = 0.0, ty_ = 0.0;
};

struct CollectResult {
  std::vector<Observation> observations;  // length num_steps + 1
  std::vector<EnvAction> actions;         // length num_steps
};

class PlayCollector {
 public:
  struct Config {
    double gain = 0.5;
    double noise_sigma = 0.005;
    int affordance_cap = 80;  // abandon a stalled attempt after this many steps
  };

  PlayCollector() : cfg_() {}
  explicit PlayCollector(const Config& cfg) : cfg_(cfg) {}

  CollectResult run_episode(Rng& rng, int num_steps, int episode_index,
                            std::vector<AffordanceSpan>* spans) const {
    CollectResult out;
    out.observations.reserve(static_cast<size_t>(num_steps) + 1);
    out.actions.reserve(static_cast<size_t>(num_steps));

    EnvState s = env_reset(rng);
    out.observations.push_back(s.obs());

    PlayScript script = PlayScript::make(sample_affordance(s, rng), rng);
    int span_start = 0;
    for (int t = 0; t < num_steps; ++t) {
      if (script.finished() || script.steps_taken() >= cfg_.affordance_cap) {
        if (spans && t > span_start)
          spans->push_back({episode_index, span_start, t,
                            affordance_name(script.kind())});
        span_start = t;
        if (script.kind() == Affordance::PickBlock && s.held > 0.5) {
          script = PlayScript::make(Affordance::PlaceBlock, rng);
        } else {
          script = PlayScript::make(sample_affordance(s, rng), rng);
        }
      }
      EnvAction a = script.step(s, cfg_.gain);
      a.dx += rng.normal() * cfg_.noise_sigma;
      a.dy += rng.normal() * cfg_.noise_sigma;
      s = env_step(s, a);
      // Store what the environment actually consumed.
      a.dx = detail::clamp_delta(a.dx);
      a.dy = detail::clamp_delta(a.dy);
      a.gripper = a.gripper >= 0.0 ? 1.0 : -1.0;
      out.actions.push_back(a);
      out.observations.push_back(s.obs());
    }
    if (spans && num_steps > span_start)
      spans->push_back({episode_index, span_start, num_steps,
                        affordance_name(script.kind())});
    return out;
  }

 private:
  // Uniform over affordances that can change the scene from here. Drawer
  // directions drop out near their respective end stops.
  Affordance sample_affordance(const EnvState& s, Rng& rng) const {
    std::vector<Affordance> pool = {Affordance::MoveSlider,
                                    Affordance::PressButton,
                                    Affordance::PickBlock};
    if (s.drawer < 0.7) pool.push_back(Affordance::OpenDrawer);
    if (s.drawer > 0.3) pool.push_back(Affordance::CloseDrawer);
    return pool[rng.uniform_int(pool.size())];
  }

  Config cfg_;
};

// ---------------------------------------------------------------------------
// Noise-free task oracle
// ---------------------------------------------------------------------------

namespace detail {

inline PlayScript oracle_script(const TaskSpec& task, const EnvState& s) {
  if (task.name == "open-drawer")
    return PlayScript::make_with_target(Affordance::OpenDrawer, 0.95);
  if (task.name == "close-drawer")
    return PlayScript::make_with_target(Affordance::CloseDrawer, 0.05);
  if (task.name == "slider-left")
    return PlayScript::make_with_target(Affordance::MoveSlider, 0.05);
  if (task.name == "slider-right")
    return PlayScript::make_with_target(Affordance::MoveSlider, 0.95);
  if (task.name == "light-on" || task.name == "light-off")
    return PlayScript::make_with_target(Affordance::PressButton, 0.0);
  if (task.name == "lift-block")
    return PlayScript::make_with_target(Affordance::PickBlock, 0.0);
  if (task.name == "place-block")
    return PlayScript::make_with_target(Affordance::PlaceBlock, 0.0,
                                        task.zone_x, task.zone_y);
  throw EnvError("unknown task: " + task.name);
}

}  // namespace detail

// Drives the scene until the task predicate holds. Returns the number of
// steps consumed, or -1 if the budget ran out. Light tasks already satisfied
// finish in zero steps. lift-block ends with the gripper closed on the
// block; every other task releases before finishing.
inline int run_oracle(EnvState& s, const TaskSpec& task, int max_steps,
                      double gain = 0.5) {
  const Observation initial = s.obs();
  if ((task.name == "light-on" || task.name == "light-off") &&
      evaluate_task(task, initial, initial))
    return 0;
  // A closing transition next to the block grasps it even when the script
  // was after a handle. Park the block mid-table before retrying, otherwise
  // the held block blocks every articulation.
  const bool wants_block =
      task.name == "lift-block" || task.name == "place-block";
  PlayScript script = detail::oracle_script(task, s);
  bool dropping = false;
  for (int t = 0; t < max_steps; ++t) {
    if (!wants_block && !dropping && s.held > 0.5) {
      script = PlayScript::make_with_target(Affordance::PlaceBlock, 0.0, 0.6,
                                            0.5);
      dropping = true;
    }
    if (script.finished()) {
      if (dropping) {
        dropping = false;
      } else if (evaluate_task(task, initial, s.obs())) {
        return t;
      }
      script = detail::oracle_script(task, s);  // retry from current pose
    }
    EnvAction a = script.step(s, gain);
    s = env_step(s, a);
  }
  return script.finished() && !dropping &&
                 evaluate_task(task, initial, s.obs())
             ? max_steps
             : -1;
}

// Landmark the task is judged around; used to retreat the effector so goal
// images do not leak the achieving pose.
inline void task_focus(const TaskSpec& task, const EnvState& s, double* fx,
                       double* fy) {
  if (task.name == "open-drawer" || task.name == "close-drawer") {
    *fx = drawer_handle_x(s);
    *fy = drawer_handle_y(s);
  } else if (task.name == "slider-left" || task.name == "slider-right") {
    *fx = slider_handle_x(s);
    *fy = slider_handle_y(s);
  } else if (task.name == "light-on" || task.name == "light-off") {
    *fx = kButtonX;
    *fy = kButtonY;
  } else if (task.name == "place-block") {
    *fx = task.zone_x;
    *fy = task.zone_y;
  } else {
    *fx = s.block_x;
    *fy = s.block_y;
  }
}

// Moves the open gripper toward the corner opposite the task landmark until
// the effector is at least min_dist away. Returns false if the budget ran
// out first.
inline bool oracle_retreat(EnvState& s, const TaskSpec& task, double min_dist,
                           int max_steps, double gain = 0.5) {
  double fx = 0.0, fy = 0.0;
  task_focus(task, s, &fx, &fy);
  const double tx = fx <= 0.5 ? 0.95 : 0.05;
  const double ty = fy <= 0.5 ? 0.95 : 0.05;
  for (int t = 0; t < max_steps; ++t) {
    if (detail::dist2d(s.eff_x, s.eff_y, fx, fy) >= min_dist) return true;
    s = env_step(s, move_toward(s, tx, ty, -1.0, gain));
  }
  return detail::dist2d(s.eff_x, s.eff_y, fx, fy) >= min_dist;
}

}  // namespace taco
