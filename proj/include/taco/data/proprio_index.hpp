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

// Grid index over the proprioceptive slice of every stored observation.
// Supports exact radius queries and "same pose, different scene" negative
// goal mining. Results come back sorted by (episode, t) so downstream
// sampling is reproducible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "taco/core/rng.hpp"
#include "taco/data/dataset.hpp"

namespace taco {

constexpr int kProprioDim = 3;  // effector x, y, gripper
constexpr double kNegativeProprioEps = 0.05;
constexpr double kNegativeSceneEps = 0.1;

inline double proprio_dist(const Observation& a, const Observation& b) {
  double s = 0.0;
  for (int i = 0; i < kProprioDim; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double scene_dist(const Observation& a, const Observation& b) {
  double s = 0.0;
  for (int i = kProprioDim; i < kObsDim; ++i)
    s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct StateRef {
  int episode = 0;
  int t = 0;  // observation index within the episode, 0..num_steps

  bool operator<(const StateRef& o) const {
    return episode != o.episode ? episode < o.episode : t < o.t;
  }
  bool operator==(const StateRef& o) const {
    return episode == o.episode && t == o.t;
  }
};

class ProprioIndex {
 public:
  static constexpr double kCell = 0.05;

  explicit ProprioIndex(const Dataset& ds) : ds_(&ds) {
    for (size_t e = 0; e < ds.episodes.size(); ++e) {
      const EpisodeRecord& ep = ds.episodes[e];
      for (size_t t = 0; t < ep.observations.size(); ++t) {
        cells_[key_of(ep.observations[t])].push_back(
            {static_cast<int>(e), static_cast<int>(t)});
        ++size_;
      }
    }
  }

  size_t size() const { return size_; }

  const Observation& obs(const StateRef& r) const {
    return ds_->episodes[r.episode].observations[r.t];
  }

  // All stored states whose proprioceptive distance to q is <= radius.
  std::vector<StateRef> query(const Observation& q, double radius) const {
    std::vector<StateRef> out;
    const int reach = static_cast<int>(std::ceil(radius / kCell));
    const int cx = cell_coord(q[0]), cy = cell_coord(q[1]);
    // Gripper values live on {-1, +1}; a mismatch alone contributes 2.
    const bool both_grips = radius >= 2.0;
    for (int gx = cx - reach; gx <= cx + reach; ++gx) {
      for (int gy = cy - reach; gy <= cy + reach; ++gy) {
        for (int gg = 0; gg < 2; ++gg) {
          if (!both_grips && gg != (q[2] > 0.0 ? 1 : 0)) continue;
          auto it = cells_.find(pack(gx, gy, gg));
          if (it == cells_.end()) continue;
          for (const StateRef& r : it->second)
            if (proprio_dist(obs(r), q) <= radius) out.push_back(r);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  // A state whose pose matches q but whose scene does not: proprioceptive
  // distance <= eps_p and scene distance >= eps_s, picked uniformly among
  // the matches. Empty when no stored state qualifies.
  std::optional<StateRef> mine_negative(const Observation& q, double eps_p,
                                        double eps_s, Rng& rng) const {
    std::vector<StateRef> pool;
    for (const StateRef& r : query(q, eps_p))
      if (scene_dist(obs(r), q) >= eps_s) pool.push_back(r);
    if (pool.empty()) return std::nullopt;
    return pool[rng.uniform_int(pool.size())];
  }

  // Negative mining with the documented fallback: when no qualifying state
  // exists, any stored state drawn uniformly stands in.
  StateRef mine_negative_or_random(const Observation& q, double eps_p,
                                   double eps_s, Rng& rng) const {
    if (auto r = mine_negative(q, eps_p, eps_s, rng)) return *r;
    return random_state(rng);
  }

  StateRef random_state(Rng& rng) const {
    uint64_t u = rng.uniform_int(size_);
    for (size_t e = 0; e < ds_->episodes.size(); ++e) {
      const uint64_t n = ds_->episodes[e].observations.size();
      if (u < n) return {static_cast<int>(e), static_cast<int>(u)};
      u -= n;
    }
    return {static_cast<int>(ds_->episodes.size()) - 1,
            ds_->episodes.back().num_steps()};
  }

 private:
  static int cell_coord(double v) {
    return static_cast<int>(std::floor(v / kCell));
  }

  uint64_t key_of(const Observation& o) const {
    return pack(cell_coord(o[0]), cell_coord(o[1]), o[2] > 0.0 ? 1 : 0);
  }

  static uint64_t pack(int x, int y, int g) {
    // Offsets keep coordinates non-negative for any state in the unit box.
    const uint64_t ux = static_cast<uint64_t>(x + 512);
    const uint64_t uy = static_cast<uint64_t>(y + 512);
    return (ux << 21) | (uy << 1) | static_cast<uint64_t>(g);
  }

  const Dataset* ds_;
  std::unordered_map<uint64_t, std::vector<StateRef>> cells_;
  size_t size_ = 0;
};

}  // namespace taco
