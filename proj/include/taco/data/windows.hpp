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

// Trajectory window sampling. Draw order is pinned (episode by step count,
// then length, then start) so a seeded generator reproduces the same stream.

#include <vector>

#include "taco/core/rng.hpp"
#include "taco/data/dataset.hpp"

namespace taco {

constexpr int kWindowLen = 16;     // model sequence length
constexpr int kWindowMinLen = 8;   // shortest sampled span

struct WindowRef {
  int episode = 0;
  int start = 0;  // first action index
  int len = 0;    // real action steps, <= kWindowLen
};

namespace detail {

inline int pick_episode_by_steps(const Dataset& ds, Rng& rng) {
  const uint64_t total = ds.total_steps();
  uint64_t u = rng.uniform_int(total);
  for (size_t i = 0; i < ds.episodes.size(); ++i) {
    const uint64_t steps = ds.episodes[i].actions.size();
    if (u < steps) return static_cast<int>(i);
    u -= steps;
  }
  return static_cast<int>(ds.episodes.size()) - 1;
}

}  // namespace detail

// Variable-length window: len ~ U{8..16} truncated to the episode, start
// uniform over valid offsets.
inline WindowRef sample_window_ref(const Dataset& ds, Rng& rng) {
  WindowRef w;
  w.episode = detail::pick_episode_by_steps(ds, rng);
  const int steps = ds.episodes[w.episode].num_steps();
  w.len = kWindowMinLen +
          static_cast<int>(rng.uniform_int(kWindowLen - kWindowMinLen + 1));
  if (w.len > steps) w.len = steps;
  w.start = static_cast<int>(rng.uniform_int(steps - w.len + 1));
  return w;
}

// Full-length window, used where a fixed stride matters.
inline WindowRef sample_window_ref_fixed(const Dataset& ds, Rng& rng) {
  WindowRef w;
  w.episode = detail::pick_episode_by_steps(ds, rng);
  const int steps = ds.episodes[w.episode].num_steps();
  w.len = kWindowLen > steps ? steps : kWindowLen;
  w.start = static_cast<int>(rng.uniform_int(steps - w.len + 1));
  return w;
}

// A window materialized to the model's fixed length. Padding repeats the
// final observation with a stay-put action (zero deltas, gripper held), so
// padded steps are genuine fixed points of the dynamics.
struct PaddedWindow {
  WindowRef ref;
  std::vector<Observation> obs;   // kWindowLen entries
  std::vector<EnvAction> act;     // kWindowLen entries
  std::vector<double> mask;       // 1 real, 0 pad
  Observation start_obs{};        // first state of the span
  Observation goal_obs{};         // state after the last real action
};

inline PaddedWindow materialize_window(const Dataset& ds, const WindowRef& w) {
  const EpisodeRecord& ep = ds.episodes[w.episode];
  PaddedWindow out;
  out.ref = w;
  out.start_obs = ep.observations[w.start];
  out.goal_obs = ep.observations[w.start + w.len];
  out.obs.reserve(kWindowLen);
  out.act.reserve(kWindowLen);
  out.mask.reserve(kWindowLen);
  for (int j = 0; j < kWindowLen; ++j) {
    if (j < w.len) {
      out.obs.push_back(ep.observations[w.start + j]);
      out.act.push_back(ep.actions[w.start + j]);
      out.mask.push_back(1.0);
    } else {
      out.obs.push_back(out.goal_obs);
      out.act.push_back({0.0, 0.0, ep.actions[w.start + w.len - 1].gripper});
      out.mask.push_back(0.0);
    }
  }
  return out;
}

}  // namespace taco
