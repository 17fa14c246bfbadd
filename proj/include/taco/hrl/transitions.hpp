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

// High-level transitions: full-length play windows encoded once by the
// frozen plan encoder, paired at training time with goals relabeled in
// hindsight. Reward is assigned by construction (offset draw), never by
// comparing states.

#include <string>
#include <vector>

#include "taco/data/proprio_index.hpp"
#include "taco/data/windows.hpp"
#include "taco/lmp/model.hpp"

namespace taco {

struct GoalSamplerConfig {
  double geometric_p = 0.3;
  int window_k = kWindowLen;       // transition stride is window_k - 1
  double positive_fraction = 0.9;  // remainder mines negatives
  double negative_proprio_eps = kNegativeProprioEps;
  double negative_scene_eps = kNegativeSceneEps;
  // When off, the negative branch draws any stored state instead of a
  // proprioceptively matched one (ablation switch).
  bool mine_negatives = true;

  int stride() const { return window_k - 1; }
};

// One window, encoded. The squashed plan z is the high-level action the
// critic sees; the pre-squash sample is kept for behavior cloning of the
// actor's Gaussian.
struct EncodedWindow {
  int episode = 0;
  int t = 0;  // start observation index
  Observation s_t{};
  Observation s_next{};  // observation t + stride
  std::vector<double> z;
  std::vector<double> z_pre;
};

struct SampledGoal {
  Observation s_g{};
  double r = 0.0;  // 1 only when the positive branch drew offset 1
};

// Draw order per call: branch uniform, then either the geometric offset or
// the miner's draws. The goal index is clipped to the episode's last
// observation; reward depends on the unclipped offset alone.
inline SampledGoal sample_goal(const Dataset& ds, const ProprioIndex& index,
                               const GoalSamplerConfig& cfg, int episode,
                               int t, Rng& rng) {
  const EpisodeRecord& ep = ds.episodes[static_cast<size_t>(episode)];
  SampledGoal out;
  if (rng.uniform01() < cfg.positive_fraction) {
    const int delta = rng.geometric1(cfg.geometric_p);
    long idx = static_cast<long>(t) +
               static_cast<long>(delta) * cfg.stride();
    const long last = static_cast<long>(ep.num_steps());
    if (idx > last) idx = last;
    out.s_g = ep.observations[static_cast<size_t>(idx)];
    out.r = delta == 1 ? 1.0 : 0.0;
    return out;
  }
  const Observation& anchor =
      ep.observations[static_cast<size_t>(t + cfg.stride())];
  StateRef ref =
      cfg.mine_negatives
          ? index.mine_negative_or_random(anchor, cfg.negative_proprio_eps,
                                          cfg.negative_scene_eps, rng)
          : index.random_state(rng);
  out.s_g = index.obs(ref);
  out.r = 0.0;
  return out;
}

// Fixed-size pool of encoded windows plus the state index used for negative
// mining. Encoding happens in batches through the frozen encoder; one plan
// is sampled per window, so the pool is the dataset the critic conserves
// against.
class TransitionPool {
 public:
  TransitionPool(const Dataset& ds, const LmpModel& model, int size, Rng& rng,
                 int encode_batch = 64)
      : ds_(&ds), index_(ds) {
    bool any = false;
    for (const EpisodeRecord& ep : ds.episodes)
      if (ep.num_steps() >= kWindowLen) any = true;
    if (!any)
      throw DatasetError("transition pool needs an episode with at least " +
                         std::to_string(kWindowLen) + " steps");
    entries_.reserve(static_cast<size_t>(size));
    std::vector<WindowRef> refs;
    refs.reserve(static_cast<size_t>(encode_batch));
    while (static_cast<int>(entries_.size()) < size) {
      refs.clear();
      const int want = size - static_cast<int>(entries_.size());
      const int b = want < encode_batch ? want : encode_batch;
      while (static_cast<int>(refs.size()) < b) {
        WindowRef w = sample_window_ref_fixed(ds, rng);
        if (w.len == kWindowLen) refs.push_back(w);
      }
      encode_block(model, refs, rng);
    }
  }

  const Dataset& dataset() const { return *ds_; }
  const ProprioIndex& index() const { return index_; }
  size_t size() const { return entries_.size(); }
  const EncodedWindow& at(size_t i) const { return entries_[i]; }

 private:
  // Encoder input rows are observation followed by the normalized action,
  // the same layout the plan model trains on.
  void encode_block(const LmpModel& model, const std::vector<WindowRef>& refs,
                    Rng& rng) {
    const int B = static_cast<int>(refs.size());
    const int T = kWindowLen;
    const int row = kObsDim + kActDim;
    std::vector<double> enc(static_cast<size_t>(B) * T * row);
    std::vector<double> mask(static_cast<size_t>(B) * T, 1.0);
    std::vector<PaddedWindow> wins;
    wins.reserve(static_cast<size_t>(B));
    for (int i = 0; i < B; ++i) {
      wins.push_back(materialize_window(*ds_, refs[static_cast<size_t>(i)]));
      const PaddedWindow& w = wins.back();
      for (int t = 0; t < T; ++t) {
        double* e = enc.data() + (static_cast<size_t>(i) * T + t) * row;
        for (int d = 0; d < kObsDim; ++d) e[d] = w.obs[t][d];
        e[kObsDim + 0] = normalize_delta(w.act[t].dx);
        e[kObsDim + 1] = normalize_delta(w.act[t].dy);
        e[kObsDim + 2] = w.act[t].gripper;
      }
    }
    GaussHead q = model.encoder()(
        Tensor::constant({B * T, row}, std::move(enc)), mask, B);
    Tensor z_pre = reparam_sample(q, rng);
    const std::vector<double>& zp = z_pre.value();
    const int L = q.dims();
    for (int i = 0; i < B; ++i) {
      EncodedWindow e;
      e.episode = refs[static_cast<size_t>(i)].episode;
      e.t = refs[static_cast<size_t>(i)].start;
      e.s_t = wins[static_cast<size_t>(i)].obs.front();
      e.s_next = wins[static_cast<size_t>(i)].obs.back();
      e.z_pre.assign(zp.begin() + static_cast<long>(i) * L,
                     zp.begin() + static_cast<long>(i + 1) * L);
      e.z.resize(static_cast<size_t>(L));
      for (int d = 0; d < L; ++d)
        e.z[static_cast<size_t>(d)] = std::tanh(e.z_pre[static_cast<size_t>(d)]);
      entries_.push_back(std::move(e));
    }
  }

  const Dataset* ds_;
  ProprioIndex index_;
  std::vector<EncodedWindow> entries_;
};

// A training batch of relabeled plan transitions, already laid out as graph
// constants. Draw order per item: pool index, then the goal draws.
struct PlanBatch {
  int batch = 0;
  Tensor s;       // [B, obs]
  Tensor z;       // [B, latent] squashed dataset plans
  Tensor s_g;     // [B, obs]
  Tensor s_next;  // [B, obs]
  std::vector<double> r;             // 0/1
  std::vector<const EncodedWindow*> entries;
};

inline PlanBatch make_plan_batch(const TransitionPool& pool,
                                 const GoalSamplerConfig& cfg, Rng& rng,
                                 int batch) {
  const int L = static_cast<int>(pool.at(0).z.size());
  PlanBatch out;
  out.batch = batch;
  std::vector<double> s(static_cast<size_t>(batch) * kObsDim);
  std::vector<double> z(static_cast<size_t>(batch) * L);
  std::vector<double> sg(static_cast<size_t>(batch) * kObsDim);
  std::vector<double> sn(static_cast<size_t>(batch) * kObsDim);
  out.r.resize(static_cast<size_t>(batch));
  out.entries.resize(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    const EncodedWindow& e =
        pool.at(static_cast<size_t>(rng.uniform_int(pool.size())));
    const SampledGoal g =
        sample_goal(pool.dataset(), pool.index(), cfg, e.episode, e.t, rng);
    for (int i = 0; i < kObsDim; ++i) {
      s[static_cast<size_t>(b) * kObsDim + i] = e.s_t[static_cast<size_t>(i)];
      sg[static_cast<size_t>(b) * kObsDim + i] = g.s_g[static_cast<size_t>(i)];
      sn[static_cast<size_t>(b) * kObsDim + i] =
          e.s_next[static_cast<size_t>(i)];
    }
    for (int i = 0; i < L; ++i)
      z[static_cast<size_t>(b) * L + i] = e.z[static_cast<size_t>(i)];
    out.r[static_cast<size_t>(b)] = g.r;
    out.entries[static_cast<size_t>(b)] = &e;
  }
  out.s = Tensor::constant({batch, kObsDim}, std::move(s));
  out.z = Tensor::constant({batch, L}, std::move(z));
  out.s_g = Tensor::constant({batch, kObsDim}, std::move(sg));
  out.s_next = Tensor::constant({batch, kObsDim}, std::move(sn));
  return out;
}

}  // namespace taco
