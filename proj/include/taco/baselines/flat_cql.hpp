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

// Flat CQL+HER: the conservative recipe from the plan-space trainer applied
// to single-step primitive actions. Goals are relabeled through the same
// sampler with stride 1 instead of 15; the action space is tanh-Gaussian
// x/y plus a two-category relaxed categorical gripper.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "taco/baselines/policy.hpp"
#include "taco/hrl/cql.hpp"

namespace taco {

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

// Stride-1 goal sampling: positive offsets step single observations and
// reward 1 means the goal IS the next observation.
inline GoalSamplerConfig flat_goal_config() {
  GoalSamplerConfig cfg;
  cfg.window_k = 2;
  return cfg;
}

struct FlatTransition {
  Observation s_t{};
  EnvAction a_t{};
  Observation s_next{};
  Observation s_g{};
  double r = 0.0;
};

// Draw order: episode (step-weighted), step, then the goal draws.
inline FlatTransition sample_flat_transition(const Dataset& ds,
                                             const ProprioIndex& index,
                                             const GoalSamplerConfig& cfg,
                                             Rng& rng) {
  const int episode = detail::pick_episode_by_steps(ds, rng);
  const EpisodeRecord& ep = ds.episodes[static_cast<size_t>(episode)];
  const int t =
      static_cast<int>(rng.uniform_int(static_cast<uint64_t>(ep.num_steps())));
  FlatTransition tr;
  tr.s_t = ep.observations[static_cast<size_t>(t)];
  tr.a_t = ep.actions[static_cast<size_t>(t)];
  tr.s_next = ep.observations[static_cast<size_t>(t) + 1];
  const SampledGoal g = sample_goal(ds, index, cfg, episode, t, rng);
  tr.s_g = g.s_g;
  tr.r = g.r;
  return tr;
}

// Actions enter the critic normalized: x/y divided by the step clip,
// gripper already in [-1, 1].
struct FlatBatch {
  int batch = 0;
  Tensor s;       // [B, obs]
  Tensor a;       // [B, 3]
  Tensor s_g;     // [B, obs]
  Tensor s_next;  // [B, obs]
  std::vector<double> r;
};

inline FlatBatch make_flat_batch(const Dataset& ds, const ProprioIndex& index,
                                 const GoalSamplerConfig& cfg, Rng& rng,
                                 int batch) {
  FlatBatch out;
  out.batch = batch;
  std::vector<double> s(static_cast<size_t>(batch) * kObsDim);
  std::vector<double> a(static_cast<size_t>(batch) * kActDim);
  std::vector<double> sg(static_cast<size_t>(batch) * kObsDim);
  std::vector<double> sn(static_cast<size_t>(batch) * kObsDim);
  out.r.resize(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    const FlatTransition tr = sample_flat_transition(ds, index, cfg, rng);
    for (int i = 0; i < kObsDim; ++i) {
      s[static_cast<size_t>(b) * kObsDim + i] = tr.s_t[static_cast<size_t>(i)];
      sg[static_cast<size_t>(b) * kObsDim + i] =
          tr.s_g[static_cast<size_t>(i)];
      sn[static_cast<size_t>(b) * kObsDim + i] =
          tr.s_next[static_cast<size_t>(i)];
    }
    a[static_cast<size_t>(b) * kActDim + 0] = normalize_delta(tr.a_t.dx);
    a[static_cast<size_t>(b) * kActDim + 1] = normalize_delta(tr.a_t.dy);
    a[static_cast<size_t>(b) * kActDim + 2] = tr.a_t.gripper;
    out.r[static_cast<size_t>(b)] = tr.r;
  }
  out.s = Tensor::constant({batch, kObsDim}, std::move(s));
  out.a = Tensor::constant({batch, kActDim}, std::move(a));
  out.s_g = Tensor::constant({batch, kObsDim}, std::move(sg));
  out.s_next = Tensor::constant({batch, kObsDim}, std::move(sn));
  return out;
}

// ---------------------------------------------------------------------------
// Actor
// ---------------------------------------------------------------------------

struct FlatActorOut {
  GaussHead xy;        // pre-squash Gaussian over the two translation dims
  Tensor grip_logits;  // [B, 2] category scores, index 1 = closed
};

// Same embed-and-trunk shape as the plan prior, with action-space heads.
class FlatActor {
 public:
  FlatActor() = default;
  FlatActor(const LmpSizes& sz, Rng& rng)
      : sz_(sz),
        emb_(sz, rng),
        trunk_({2 * sz.obs_embed, sz.prior_hidden, sz.prior_hidden,
                sz.prior_hidden},
               rng, Act::Tanh),
        mean_head_(sz.prior_hidden, 2, rng),
        log_std_head_(sz.prior_hidden, 2, rng),
        grip_head_(sz.prior_hidden, 2, rng) {}

  FlatActorOut operator()(const Tensor& s, const Tensor& s_g) const {
    Tensor h = tanh_t(trunk_(concat_lastdim(emb_(s), emb_(s_g))));
    return {{mean_head_(h),
             clamp_t(log_std_head_(h), sz_.log_std_min, sz_.log_std_max)},
            grip_head_(h)};
  }

  void collect(const std::string& prefix, ParamList& out) {
    emb_.collect(prefix + "/emb", out);
    trunk_.collect(prefix + "/trunk", out);
    mean_head_.collect(prefix + "/mean", out);
    log_std_head_.collect(prefix + "/log_std", out);
    grip_head_.collect(prefix + "/grip", out);
  }

 private:
  LmpSizes sz_;
  ObsEmbedder emb_;
  Mlp trunk_;
  Dense mean_head_, log_std_head_, grip_head_;
};

// ---------------------------------------------------------------------------
// Relaxed gripper
// ---------------------------------------------------------------------------

// Two-category relaxed categorical expressed through the logit difference
// a = score(closed) - score(open): with logistic noise l the sample is
//   g = 2 * sigmoid((a + l) / temp) - 1 = tanh((a + l) / (2 temp)),
// and its log-density on (-1, 1) follows by change of variables:
//   log p(g) = log temp - l - 2 softplus(-l)
//            + softplus(t) + softplus(-t) - log 2,   t = (a + l) / temp.
// Hard samples take the sign of a.
inline double logistic_noise(Rng& rng) {
  const double u = rng.uniform01();
  return std::log(u) - std::log1p(-u);
}

inline double relaxed_grip_value(double a, double l, double temp) {
  return std::tanh((a + l) / (2.0 * temp));
}

inline double relaxed_grip_log_density(double a, double l, double temp) {
  const double t = (a + l) / temp;
  auto sp = [](double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  };
  return std::log(temp) - l - 2.0 * sp(-l) + sp(t) + sp(-t) - kLogTwo;
}

namespace detail {

// [B, 1] logit differences from a [B, 2] score matrix.
inline Tensor grip_diff(const Tensor& logits) {
  return sub(slice_lastdim(logits, 1, 2), slice_lastdim(logits, 0, 1));
}

struct FlatActorEval {
  std::vector<double> mean;     // [B, 2]
  std::vector<double> log_std;  // [B, 2]
  std::vector<double> grip_a;   // [B]
};

inline FlatActorEval flat_actor_values(const FlatActor& actor, const Tensor& s,
                                       const Tensor& s_g) {
  FlatActorOut out = actor(s, s_g);
  return {out.xy.mean.value(), out.xy.log_std.value(),
          reshape(grip_diff(out.grip_logits), {out.xy.batch()}).value()};
}

// One action block [B, 3]: squashed x/y plus a relaxed gripper. Draws an
// eps pair per row (row-major) and then one logistic noise per row; fills
// logpi with the joint log-density at the sample.
inline std::vector<double> sample_flat_rows(const FlatActorEval& d, int B,
                                            double temp, Rng& rng,
                                            std::vector<double>* logpi) {
  std::vector<double> a(static_cast<size_t>(B) * kActDim);
  if (logpi) logpi->assign(static_cast<size_t>(B), 0.0);
  for (int b = 0; b < B; ++b) {
    for (int x = 0; x < 2; ++x) {
      const size_t i = static_cast<size_t>(b) * 2 + x;
      const double eps = rng.normal();
      const double pre = d.mean[i] + std::exp(d.log_std[i]) * eps;
      a[static_cast<size_t>(b) * kActDim + x] = std::tanh(pre);
      if (logpi) {
        (*logpi)[static_cast<size_t>(b)] +=
            -0.5 * eps * eps - d.log_std[i] - 0.5 * kLogTwoPi -
            2.0 * (kLogTwo - pre - softplus_val(-2.0 * pre));
      }
    }
  }
  for (int b = 0; b < B; ++b) {
    const double l = logistic_noise(rng);
    const double ga = d.grip_a[static_cast<size_t>(b)];
    a[static_cast<size_t>(b) * kActDim + 2] = relaxed_grip_value(ga, l, temp);
    if (logpi)
      (*logpi)[static_cast<size_t>(b)] +=
          relaxed_grip_log_density(ga, l, temp);
  }
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

class FlatModel {
 public:
  FlatModel() = default;
  FlatModel(const LmpSizes& sz, int critic_hidden, Rng& rng)
      : sizes_(sz),
        actor_(sz, rng),
        q1_(sz, kActDim, critic_hidden, rng),
        q2_(sz, kActDim, critic_hidden, rng),
        t1_(sz, kActDim, critic_hidden, rng),
        t2_(sz, kActDim, critic_hidden, rng),
        log_alpha_(Tensor::param({1}, {0.0})) {
    sync_targets();
  }

  const LmpSizes& sizes() const { return sizes_; }
  const FlatActor& actor() const { return actor_; }
  const Critic& q1() const { return q1_; }
  const Critic& q2() const { return q2_; }
  const Critic& target1() const { return t1_; }
  const Critic& target2() const { return t2_; }
  Tensor& log_alpha() { return log_alpha_; }
  double entropy_coef() const { return std::exp(log_alpha_.value()[0]); }

  ParamList actor_params() {
    ParamList out;
    actor_.collect("actor", out);
    return out;
  }
  ParamList critic_params() {
    ParamList out;
    q1_.collect("q1", out);
    q2_.collect("q2", out);
    return out;
  }
  ParamList target_params() {
    ParamList out;
    t1_.collect("t1", out);
    t2_.collect("t2", out);
    return out;
  }
  ParamList params() {
    ParamList out = actor_params();
    ParamList c = critic_params();
    ParamList t = target_params();
    out.insert(out.end(), c.begin(), c.end());
    out.insert(out.end(), t.begin(), t.end());
    out.push_back({"alpha/log", log_alpha_});
    return out;
  }

  void sync_targets() {
    ParamList online = critic_params();
    ParamList target = target_params();
    copy_values(online, target);
  }

  void save(const std::string& path) { save_checkpoint(path, params()); }
  void load(const std::string& path) {
    ParamList p = params();
    load_into(p, path);
  }

 private:
  LmpSizes sizes_;
  FlatActor actor_;
  Critic q1_, q2_, t1_, t2_;
  Tensor log_alpha_;
};

// ---------------------------------------------------------------------------
// Losses: the plan-space loss structure with flat action sampling
// ---------------------------------------------------------------------------

// Draws one actor action block at s_next (eps pairs then logistic noises).
inline std::vector<double> flat_bellman_targets(FlatModel& model,
                                                const FlatBatch& batch,
                                                double gamma, double temp,
                                                Rng& rng) {
  const int B = batch.batch;
  detail::FlatActorEval d =
      detail::flat_actor_values(model.actor(), batch.s_next, batch.s_g);
  std::vector<double> a =
      detail::sample_flat_rows(d, B, temp, rng, nullptr);
  Tensor at = Tensor::constant({B, kActDim}, std::move(a));
  const std::vector<double> q1 =
      model.target1()(batch.s_next, at, batch.s_g).value();
  const std::vector<double> q2 =
      model.target2()(batch.s_next, at, batch.s_g).value();
  std::vector<double> y(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    const size_t i = static_cast<size_t>(b);
    y[i] = batch.r[i] == 1.0 ? 1.0 : gamma * std::min(q1[i], q2[i]);
  }
  return y;
}

// Pessimism set per row: ood_samples uniform actions over (-1,1)^3 with
// correction 3 log 2, ood_samples actor actions corrected by -log pi, and
// the dataset action. Draw order after the backup: uniform blocks [B, 3]
// row-major, then actor blocks as in sampling above.
inline CriticLossParts flat_cql_critic_loss(FlatModel& model,
                                            const FlatBatch& batch,
                                            const std::vector<double>& y,
                                            const CqlHyperParams& hp,
                                            double temp, Rng& rng) {
  const int B = batch.batch;
  const double correction = kActDim * kLogTwo;

  std::vector<Tensor> action_cols;
  std::vector<double> col_shift;
  for (int v = 0; v < hp.ood_samples; ++v) {
    std::vector<double> u(static_cast<size_t>(B) * kActDim);
    for (double& x : u) x = rng.uniform(-1.0, 1.0);
    action_cols.push_back(Tensor::constant({B, kActDim}, std::move(u)));
    col_shift.push_back(correction);
  }
  detail::FlatActorEval d =
      detail::flat_actor_values(model.actor(), batch.s, batch.s_g);
  std::vector<std::vector<double>> actor_logpi;
  for (int v = 0; v < hp.ood_samples; ++v) {
    std::vector<double> logpi;
    std::vector<double> a = detail::sample_flat_rows(d, B, temp, rng, &logpi);
    action_cols.push_back(Tensor::constant({B, kActDim}, std::move(a)));
    col_shift.push_back(0.0);  // corrected per row below
    actor_logpi.push_back(std::move(logpi));
  }
  action_cols.push_back(batch.a);
  col_shift.push_back(0.0);

  Tensor y_t = Tensor::constant({B}, y);
  const Critic* critics[2] = {&model.q1(), &model.q2()};
  CriticLossParts parts;
  Tensor total;
  for (int c = 0; c < 2; ++c) {
    const Critic& q = *critics[c];
    Tensor q_data = reshape(q(batch.s, batch.a, batch.s_g), {B});
    Tensor mse = mean_all(square_t(sub(q_data, y_t)));

    Tensor cols;
    for (size_t v = 0; v < action_cols.size(); ++v) {
      Tensor qc = q(batch.s, action_cols[v], batch.s_g);
      if (col_shift[v] != 0.0) qc = add_scalar(qc, col_shift[v]);
      const long a = static_cast<long>(v) - hp.ood_samples;
      if (a >= 0 && a < hp.ood_samples)
        qc = sub(qc, Tensor::constant(
                         {B, 1}, actor_logpi[static_cast<size_t>(a)]));
      cols = v == 0 ? qc : concat_lastdim(cols, qc);
    }
    Tensor gap = sub(mean_all(logsumexp_lastdim(cols)), mean_all(q_data));
    Tensor loss_c = add(mse, mul_scalar(gap, hp.cql_alpha));
    total = c == 0 ? loss_c : add(total, loss_c);

    (c == 0 ? parts.mse1 : parts.mse2) = mse.item();
    (c == 0 ? parts.gap1 : parts.gap2) = gap.item();
    parts.mean_q += 0.5 * mean_all(q_data).item();
  }
  parts.loss = total;
  if (!std::isfinite(parts.loss.item())) {
    std::string dump = "flat critic loss is not finite; first rows:";
    for (int b = 0; b < B && b < 4; ++b) {
      dump += " [r=" + format_double(batch.r[static_cast<size_t>(b)]) +
              " y=" + format_double(y[static_cast<size_t>(b)]) + "]";
    }
    throw DivergenceError(dump);
  }
  return parts;
}

// Reparameterized flat actor objective. Gradient reaches the x/y heads
// through the squashed Gaussian and the gripper head through the relaxed
// sample; the noise terms of the log-density are constants.
inline ActorLossParts flat_cql_actor_loss(FlatModel& model,
                                          const FlatBatch& batch,
                                          double entropy_coef, double temp,
                                          Rng& rng) {
  const int B = batch.batch;
  FlatActorOut out = model.actor()(batch.s, batch.s_g);
  Tensor pre = reparam_sample(out.xy, rng);
  Tensor xy = tanh_t(pre);
  Tensor logpi_xy = tanh_gauss_logprob(pre, out.xy);

  std::vector<double> noise(static_cast<size_t>(B));
  std::vector<double> dens_const(static_cast<size_t>(B));
  auto sp = [](double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  };
  for (int b = 0; b < B; ++b) {
    const double l = logistic_noise(rng);
    noise[static_cast<size_t>(b)] = l;
    dens_const[static_cast<size_t>(b)] =
        std::log(temp) - l - 2.0 * sp(-l) - kLogTwo;
  }
  Tensor t = mul_scalar(
      add(detail::grip_diff(out.grip_logits), Tensor::constant({B, 1}, noise)),
      1.0 / temp);
  Tensor g = tanh_t(mul_scalar(t, 0.5));
  Tensor logpi_g =
      add(add(softplus_t(t), softplus_t(neg(t))),
          Tensor::constant({B, 1}, std::move(dens_const)));
  Tensor logpi = add(logpi_xy, reshape(logpi_g, {B}));

  Tensor a3 = concat_lastdim(xy, g);
  Tensor q1 = reshape(model.q1()(batch.s, a3, batch.s_g), {B});
  Tensor q2 = reshape(model.q2()(batch.s, a3, batch.s_g), {B});
  ActorLossParts parts;
  parts.loss = mean_all(sub(mul_scalar(logpi, entropy_coef),
                            min_elem(q1, q2)));
  parts.mean_logpi = mean_all(logpi).item();
  return parts;
}

// ---------------------------------------------------------------------------
// Behavior-cloning warmstart on dataset actions
// ---------------------------------------------------------------------------

// x/y fit as a squashed Gaussian on un-squashed dataset actions (clipped a
// hair inside +-1 so the inverse stays finite); gripper fit as two-category
// cross entropy. Conditions on the transition's own next observation. Draws
// per item: episode, step.
inline std::vector<double> flat_bc_warmstart(FlatModel& model,
                                             const Dataset& ds, int epochs,
                                             int steps_per_epoch, int batch,
                                             double lr, Rng& rng) {
  constexpr double kAtanhClip = 1.0 - 1e-6;
  ParamList params = model.actor_params();
  Adam opt(params, {lr, 0.9, 0.999, 1e-8});
  std::vector<double> epoch_means;
  for (int e = 0; e < epochs; ++e) {
    double sum = 0.0;
    for (int i = 0; i < steps_per_epoch; ++i) {
      std::vector<double> s(static_cast<size_t>(batch) * kObsDim);
      std::vector<double> sg(static_cast<size_t>(batch) * kObsDim);
      std::vector<double> pre(static_cast<size_t>(batch) * 2);
      std::vector<double> g01(static_cast<size_t>(batch));
      for (int b = 0; b < batch; ++b) {
        const int episode = detail::pick_episode_by_steps(ds, rng);
        const EpisodeRecord& ep = ds.episodes[static_cast<size_t>(episode)];
        const int t = static_cast<int>(
            rng.uniform_int(static_cast<uint64_t>(ep.num_steps())));
        const Observation& st = ep.observations[static_cast<size_t>(t)];
        const Observation& nx = ep.observations[static_cast<size_t>(t) + 1];
        for (int d = 0; d < kObsDim; ++d) {
          s[static_cast<size_t>(b) * kObsDim + d] = st[static_cast<size_t>(d)];
          sg[static_cast<size_t>(b) * kObsDim + d] =
              nx[static_cast<size_t>(d)];
        }
        const EnvAction& act = ep.actions[static_cast<size_t>(t)];
        const double ax = normalize_delta(act.dx);
        const double ay = normalize_delta(act.dy);
        pre[static_cast<size_t>(b) * 2 + 0] =
            std::atanh(std::clamp(ax, -kAtanhClip, kAtanhClip));
        pre[static_cast<size_t>(b) * 2 + 1] =
            std::atanh(std::clamp(ay, -kAtanhClip, kAtanhClip));
        g01[static_cast<size_t>(b)] = act.gripper >= 0.0 ? 1.0 : 0.0;
      }
      FlatActorOut out = model.actor()(
          Tensor::constant({batch, kObsDim}, std::move(s)),
          Tensor::constant({batch, kObsDim}, std::move(sg)));
      Tensor nll_xy = neg(tanh_gauss_logprob(
          Tensor::constant({batch, 2}, std::move(pre)), out.xy));
      Tensor bce =
          reshape(bce_logits(detail::grip_diff(out.grip_logits), g01),
                  {batch});
      Tensor loss = mean_all(add(nll_xy, bce));
      backward(loss);
      opt.step();
      sum += loss.item();
    }
    epoch_means.push_back(sum / steps_per_epoch);
  }
  return epoch_means;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct FlatTrainConfig {
  int epochs = 10;
  int steps_per_epoch = 500;
  int batch = 64;
  double critic_lr = 3e-4;
  double actor_lr = 1e-4;
  double alpha_lr = 3e-4;
  CqlHyperParams cql{};  // target entropy overridden to -3 below
  GoalSamplerConfig goals = flat_goal_config();
  double temp_start = 1.0;
  double temp_end = 0.5;
  int warmstart_epochs = 5;
  int critic_hidden = 64;
  uint64_t seed = 0;
  std::string out_dir;
  bool resume = false;

  FlatTrainConfig() { cql.target_entropy = -static_cast<double>(kActDim); }
};

class FlatTrainer {
 public:
  FlatTrainer(FlatModel& model, const Dataset& data,
              const FlatTrainConfig& cfg)
      : model_(&model),
        ds_(&data),
        cfg_(cfg),
        index_(data),
        critic_opt_(model.critic_params(), {cfg.critic_lr, 0.9, 0.999, 1e-8}),
        actor_opt_(model.actor_params(), {cfg.actor_lr, 0.9, 0.999, 1e-8}),
        alpha_opt_({{"alpha/log", model.log_alpha()}},
                   {cfg.alpha_lr, 0.9, 0.999, 1e-8}),
        rng_(Rng::derive(cfg.seed, "flat/train")) {}

  // Relaxation temperature for the step about to run, annealed linearly
  // from temp_start to temp_end across the configured run.
  double temperature() const {
    const double total =
        static_cast<double>(cfg_.epochs) * cfg_.steps_per_epoch;
    const double done = static_cast<double>(critic_opt_.step_count());
    const double frac = total > 1.0 ? done / (total - 1.0) : 1.0;
    const double f = frac > 1.0 ? 1.0 : frac;
    return cfg_.temp_start + (cfg_.temp_end - cfg_.temp_start) * f;
  }

  HrlStepStats train_step() {
    const double temp = temperature();
    FlatBatch batch =
        make_flat_batch(*ds_, index_, cfg_.goals, rng_, cfg_.batch);
    const std::vector<double> y =
        flat_bellman_targets(*model_, batch, cfg_.cql.gamma, temp, rng_);
    CriticLossParts cp =
        flat_cql_critic_loss(*model_, batch, y, cfg_.cql, temp, rng_);
    backward(cp.loss);
    critic_opt_.step();

    ActorLossParts ap = flat_cql_actor_loss(*model_, batch,
                                            model_->entropy_coef(), temp,
                                            rng_);
    backward(ap.loss);
    actor_opt_.step();

    Tensor al = entropy_coef_loss(model_->log_alpha(), ap.mean_logpi,
                                  cfg_.cql.target_entropy);
    backward(al);
    alpha_opt_.step();

    ParamList online = model_->critic_params();
    ParamList target = model_->target_params();
    soft_update(online, target, cfg_.cql.tau);

    HrlStepStats st;
    st.step = critic_opt_.step_count();
    st.critic_loss = cp.loss.item();
    st.actor_loss = ap.loss.item();
    st.cons_gap = 0.5 * (cp.gap1 + cp.gap2);
    st.entropy_coef = model_->entropy_coef();
    st.mean_q = cp.mean_q;
    double r1 = 0.0;
    for (const double r : batch.r) r1 += r;
    st.frac_r1 = r1 / cfg_.batch;
    return st;
  }

  void run() {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir);
    int start_epoch = -1;
    if (cfg_.resume) {
      const int last = latest_epoch_on_disk();
      if (last >= 0) {
        model_->load(epoch_path(last, ".ckpt"));
        load_state(epoch_path(last, ".state"));
        start_epoch = last;
        trim_csv(critic_opt_.step_count());
      }
    }
    if (start_epoch < 0) {
      if (cfg_.warmstart_epochs > 0)
        flat_bc_warmstart(*model_, *ds_, cfg_.warmstart_epochs,
                          cfg_.steps_per_epoch, cfg_.batch, cfg_.actor_lr,
                          rng_);
      model_->save(epoch_path(0, ".ckpt"));
      save_state(epoch_path(0, ".state"));
      start_epoch = 0;
    }
    CsvWriter csv(csv_path(),
                  {"step", "critic_loss", "actor_loss", "cons_gap",
                   "entropy_coef", "mean_q", "frac_r1", "method"},
                  /*append=*/critic_opt_.step_count() > 0);

    for (int epoch = start_epoch; epoch < cfg_.epochs; ++epoch) {
      double epoch_sum = 0.0;
      for (int i = 0; i < cfg_.steps_per_epoch; ++i) {
        const HrlStepStats st = train_step();
        epoch_sum += st.critic_loss;
        csv.row({std::to_string(st.step), format_double(st.critic_loss),
                 format_double(st.actor_loss), format_double(st.cons_gap),
                 format_double(st.entropy_coef), format_double(st.mean_q),
                 format_double(st.frac_r1), "cql-her"});
      }
      const double epoch_mean = epoch_sum / cfg_.steps_per_epoch;
      if (epoch == start_epoch && first_epoch_mean_ == 0.0)
        first_epoch_mean_ = epoch_mean;
      diverged_epochs_ = divergence_guard_update(epoch_mean, first_epoch_mean_,
                                                 diverged_epochs_);
      model_->save(epoch_path(epoch + 1, ".ckpt"));
      save_state(epoch_path(epoch + 1, ".state"));
    }
    model_->save((fs::path(cfg_.out_dir) / "flat_latest.ckpt").string());
  }

  Rng& rng() { return rng_; }

  std::string csv_path() const {
    return (std::filesystem::path(cfg_.out_dir) / "flat_train.csv").string();
  }

  std::string epoch_path(int epoch, const char* ext) const {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "flat_epoch_%04d%s", epoch, ext);
    return (std::filesystem::path(cfg_.out_dir) / buf).string();
  }

  void save_state(const std::string& path) {
    std::vector<CheckpointBlock> blocks;
    append_adam(blocks, critic_opt_, "critic");
    append_adam(blocks, actor_opt_, "actor");
    append_adam(blocks, alpha_opt_, "alpha");
    const std::array<uint64_t, 4> st = rng_.state();
    std::vector<double> rng_bits(4);
    for (int i = 0; i < 4; ++i) rng_bits[i] = bits_to_double(st[i]);
    blocks.push_back({"rng/state", {4}, rng_bits});
    blocks.push_back({"progress/step", {1},
                      {static_cast<double>(critic_opt_.step_count())}});
    blocks.push_back({"progress/actor_step", {1},
                      {static_cast<double>(actor_opt_.step_count())}});
    blocks.push_back({"progress/alpha_step", {1},
                      {static_cast<double>(alpha_opt_.step_count())}});
    blocks.push_back({"guard/first_epoch_mean", {1}, {first_epoch_mean_}});
    blocks.push_back({"guard/diverged_epochs", {1},
                      {static_cast<double>(diverged_epochs_)}});
    save_checkpoint(path, blocks);
  }

  void load_state(const std::string& path) {
    const std::vector<CheckpointBlock> blocks = load_checkpoint(path);
    auto find = [&](const std::string& name) -> const CheckpointBlock& {
      for (const CheckpointBlock& b : blocks)
        if (b.name == name) return b;
      throw CheckpointError("missing block '" + name + "' in " + path);
    };
    auto restore = [&](Adam& opt, const std::string& tag) {
      const ParamList& params = opt.params();
      for (size_t i = 0; i < params.size(); ++i) {
        opt.moments_m()[i] =
            find("adam/" + tag + "/m/" + params[i].name).values;
        opt.moments_v()[i] =
            find("adam/" + tag + "/v/" + params[i].name).values;
      }
    };
    restore(critic_opt_, "critic");
    restore(actor_opt_, "actor");
    restore(alpha_opt_, "alpha");
    const CheckpointBlock& rb = find("rng/state");
    std::array<uint64_t, 4> st;
    for (int i = 0; i < 4; ++i)
      st[static_cast<size_t>(i)] =
          double_to_bits(rb.values[static_cast<size_t>(i)]);
    rng_.set_state(st);
    critic_opt_.set_step_count(
        static_cast<long>(find("progress/step").values[0]));
    actor_opt_.set_step_count(
        static_cast<long>(find("progress/actor_step").values[0]));
    alpha_opt_.set_step_count(
        static_cast<long>(find("progress/alpha_step").values[0]));
    first_epoch_mean_ = find("guard/first_epoch_mean").values[0];
    diverged_epochs_ =
        static_cast<int>(find("guard/diverged_epochs").values[0]);
  }

 private:
  static void append_adam(std::vector<CheckpointBlock>& blocks, Adam& opt,
                          const std::string& tag) {
    const ParamList& params = opt.params();
    auto& m = opt.moments_m();
    auto& v = opt.moments_v();
    for (size_t i = 0; i < params.size(); ++i) {
      blocks.push_back({"adam/" + tag + "/m/" + params[i].name,
                        params[i].tensor.shape(), m[i]});
      blocks.push_back({"adam/" + tag + "/v/" + params[i].name,
                        params[i].tensor.shape(), v[i]});
    }
  }

  int latest_epoch_on_disk() const {
    namespace fs = std::filesystem;
    int last = -1;
    for (int e = 0; e <= cfg_.epochs; ++e)
      if (fs::exists(epoch_path(e, ".state")) &&
          fs::exists(epoch_path(e, ".ckpt")))
        last = e;
    return last;
  }

  void trim_csv(long max_step) const {
    std::ifstream is(csv_path());
    if (!is) return;
    std::vector<std::string> keep;
    std::string line;
    if (std::getline(is, line)) keep.push_back(line);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const long step = std::stol(line.substr(0, line.find(',')));
      if (step <= max_step) keep.push_back(line);
    }
    is.close();
    std::ofstream os(csv_path(), std::ios::trunc);
    for (const std::string& l : keep) os << l << '\n';
  }

  FlatModel* model_;
  const Dataset* ds_;
  FlatTrainConfig cfg_;
  ProprioIndex index_;
  Adam critic_opt_, actor_opt_, alpha_opt_;
  Rng rng_;
  double first_epoch_mean_ = 0.0;
  int diverged_epochs_ = 0;
};

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

// Deterministic per-step control: squashed mean for x/y scaled back to
// environment units, hard gripper by category argmax.
class FlatPolicy : public GoalPolicy {
 public:
  explicit FlatPolicy(const FlatModel& model) : model_(&model) {}

  void reset() override {}

  EnvAction act(const Observation& s, const Observation& s_g) override {
    detail::FlatActorEval d = detail::flat_actor_values(
        model_->actor(),
        Tensor::constant({1, kObsDim},
                         std::vector<double>(s.begin(), s.end())),
        Tensor::constant({1, kObsDim},
                         std::vector<double>(s_g.begin(), s_g.end())));
    return {std::tanh(d.mean[0]) * kActionClip,
            std::tanh(d.mean[1]) * kActionClip,
            d.grip_a[0] >= 0.0 ? 1.0 : -1.0};
  }

 private:
  const FlatModel* model_;
};

}  // namespace taco
