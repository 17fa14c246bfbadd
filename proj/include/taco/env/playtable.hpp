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

// 2D tabletop with a gripper, a movable block, a drawer, a slider, and a
// light button. Dynamics are a pure function of (state, action); all
// interaction checks use pre-move effector distances.

#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "taco/core/rng.hpp"

namespace taco {

constexpr int kObsDim = 9;
constexpr int kActDim = 3;
constexpr double kActionClip = 0.05;
constexpr double kInteractRadius = 0.03;
constexpr double kDrawerTravel = 0.3;  // handle sweep per unit of openness
constexpr double kSliderTravel = 0.3;
constexpr double kPlaceRadius = 0.05;

using Observation = std::array<double, kObsDim>;

struct EnvAction {
  double dx = 0.0;
  double dy = 0.0;
  double gripper = -1.0;  // < 0 open, >= 0 closed
};

class EnvError : public std::runtime_error {
 public:
  explicit EnvError(const std::string& what) : std::runtime_error(what) {}
};

struct EnvState {
  double eff_x = 0.5, eff_y = 0.5;
  double gripper = -1.0;  // -1 open, +1 closed
  double block_x = 0.5, block_y = 0.5;
  double held = 0.0;  // 1 while the block is grasped
  double drawer = 0.0;  // 0 shut .. 1 fully open
  double slider = 0.0;  // 0 left .. 1 right
  double light = 0.0;   // 0 off, 1 on

  Observation obs() const {
    return {eff_x, eff_y, gripper, block_x, block_y, held, drawer, slider,
            light};
  }

  static EnvState from_obs(const Observation& o) {
    EnvState s;
    s.eff_x = o[0];
    s.eff_y = o[1];
    s.gripper = o[2];
    s.block_x = o[3];
    s.block_y = o[4];
    s.held = o[5];
    s.drawer = o[6];
    s.slider = o[7];
    s.light = o[8];
    return s;
  }
};

inline double drawer_handle_x(const EnvState&) { return 0.9; }
inline double drawer_handle_y(const EnvState& s) {
  return 0.1 + kDrawerTravel * s.drawer;
}
inline double slider_handle_x(const EnvState& s) {
  return 0.1 + kSliderTravel * s.slider;
}
inline double slider_handle_y(const EnvState&) { return 0.9; }
constexpr double kButtonX = 0.5;
constexpr double kButtonY = 0.9;

namespace detail {

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline double clamp_delta(double v) {
  return v < -kActionClip ? -kActionClip : (v > kActionClip ? kActionClip : v);
}

inline double dist2d(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}

}  // namespace detail

// Fresh scene: poses and articulations uniform, light a fair coin, gripper
// open and nothing held. Draw order is fixed (effector x,y; block x,y;
// drawer; slider; light) so a seeded generator replays the same scene.
inline EnvState env_reset(Rng& rng) {
  EnvState s;
  s.eff_x = rng.uniform01();
  s.eff_y = rng.uniform01();
  s.block_x = rng.uniform01();
  s.block_y = rng.uniform01();
  s.drawer = rng.uniform01();
  s.slider = rng.uniform01();
  s.light = rng.bernoulli(0.5) ? 1.0 : 0.0;
  s.gripper = -1.0;
  s.held = 0.0;
  return s;
}

// One simulation step. Interactions are mutually exclusive with priority
// block > drawer > slider > button, all judged at the pre-move effector
// position. A held block tracks the effector until the gripper opens.
inline EnvState env_step(const EnvState& s, const EnvAction& a) {
  EnvState n = s;
  const double dx = detail::clamp_delta(a.dx);
  const double dy = detail::clamp_delta(a.dy);
  const double g_cmd = a.gripper >= 0.0 ? 1.0 : -1.0;
  const bool closed = g_cmd > 0.0;
  const bool closing = s.gripper < 0.0 && closed;

  if (s.held > 0.5) {
    n.eff_x = detail::clamp01(s.eff_x + dx);
    n.eff_y = detail::clamp01(s.eff_y + dy);
    if (closed) {
      n.block_x = n.eff_x;
      n.block_y = n.eff_y;
    } else {
      n.held = 0.0;  // release: block stays where it was
    }
    n.gripper = g_cmd;
    return n;
  }

  enum class Target { None, Block, Drawer, Slider, Button };
  Target target = Target::None;
  if (closing &&
      detail::dist2d(s.eff_x, s.eff_y, s.block_x, s.block_y) <=
          kInteractRadius) {
    target = Target::Block;
  } else if (closed && detail::dist2d(s.eff_x, s.eff_y, drawer_handle_x(s),
                                      drawer_handle_y(s)) <= kInteractRadius) {
    target = Target::Drawer;
  } else if (closed && detail::dist2d(s.eff_x, s.eff_y, slider_handle_x(s),
                                      slider_handle_y(s)) <= kInteractRadius) {
    target = Target::Slider;
  } else if (closing && detail::dist2d(s.eff_x, s.eff_y, kButtonX, kButtonY) <=
                            kInteractRadius) {
    target = Target::Button;
  }

  switch (target) {
    case Target::Drawer:
      n.drawer = detail::clamp01(s.drawer + dy / kDrawerTravel);
      break;
    case Target::Slider:
      n.slider = detail::clamp01(s.slider + dx / kSliderTravel);
      break;
    case Target::Button:
      n.light = s.light > 0.5 ? 0.0 : 1.0;
      break;
    default:
      break;
  }

  n.eff_x = detail::clamp01(s.eff_x + dx);
  n.eff_y = detail::clamp01(s.eff_y + dy);
  if (target == Target::Block) {
    n.held = 1.0;
    n.block_x = n.eff_x;
    n.block_y = n.eff_y;
  }
  n.gripper = g_cmd;
  return n;
}

// ---------------------------------------------------------------------------
// Task predicates
// ---------------------------------------------------------------------------

struct TaskSpec {
  std::string name;
  double zone_x = 0.0;  // place-block only
  double zone_y = 0.0;

  std::string label() const {
    if (name == "place-block") {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s@%.3f,%.3f", name.c_str(), zone_x,
                    zone_y);
      return buf;
    }
    return name;
  }
};

inline const std::array<const char*, 8>& task_names() {
  static const std::array<const char*, 8> names = {
      "open-drawer", "close-drawer", "slider-left", "slider-right",
      "light-on",    "light-off",    "lift-block",  "place-block"};
  return names;
}

inline bool is_known_task(const std::string& name) {
  for (const char* n : task_names())
    if (name == n) return true;
  return false;
}

// All tasks are judged on the current observation alone; the initial
// observation is part of the call contract for protocol symmetry.
inline bool evaluate_task(const TaskSpec& task, const Observation& /*initial*/,
                          const Observation& current) {
  const double held = current[5], d = current[6], s = current[7],
               light = current[8];
  if (task.name == "open-drawer") return d > 0.8;
  if (task.name == "close-drawer") return d < 0.2;
  if (task.name == "slider-left") return s < 0.2;
  if (task.name == "slider-right") return s > 0.8;
  if (task.name == "light-on") return light > 0.5;
  if (task.name == "light-off") return light < 0.5;
  if (task.name == "lift-block") return held > 0.5;
  if (task.name == "place-block")
    return held < 0.5 && detail::dist2d(current[3], current[4], task.zone_x,
                                        task.zone_y) < kPlaceRadius;
  throw EnvError("unknown task: " + task.name);
}

}  // namespace taco
