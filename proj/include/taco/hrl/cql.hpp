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

// Conservative Q-learning over latent plans. The actor shares the prior's
// topology and starts as a copy of its weights; two critics score
// (state, plan, goal) triples and a pessimism term pushes down plans the
// dataset never took.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "taco/core/csv.hpp"
#include "taco/hrl/transitions.hpp"
#include "taco/lmp/trainer.hpp"

namespace taco {

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

// Scalar state-action value over embed(s) ++ embed(s_g) ++ action.
class Critic {
 public:
  Critic() = default;
  Critic(const LmpSizes& sz, int act_dim, int hidden, Rng& rng)
      : emb_(sz, rng),
        trunk_({2 * sz.obs_embed + act_dim, hidden, hidden, hidden}, rng,
               Act::Relu),
        head_(hidden, 1, rng) {}

  // q as [B, 1].
  Tensor operator()(const Tensor& s, const Tensor& a,
                    const Tensor& s_g) const {
    Tensor x = concat_lastdim(concat_lastdim(emb_(s), emb_(s_g)), a);
    return head_(relu_t(trunk_(x)));
  }

  void collect(const std::string& prefix, ParamList& out) {
    emb_.collect(prefix + "/emb", out);
    trunk_.collect(prefix + "/trunk", out);
    head_.collect(prefix + "/head", out);
  }

 private:
  ObsEmbedder emb_;
  Mlp trunk_;
  Dense head_;
};

// Per-parameter polyak step: target <- (1 - rate) * target + rate * online.
inline void soft_update(ParamList& online, ParamList& target, double rate) {
  if (online.size() != target.size())
    throw TensorError("soft_update: parameter lists differ in size");
  for (size_t i = 0; i < online.size(); ++i) {
    const std::vector<double>& o = online[i].tensor.value();
    std::vector<double>& t = target[i].tensor.raw_value();
    if (o.size() != t.size())
      throw TensorError("soft_update: shape mismatch at " + online[i].name);
    for (size_t j = 0; j < o.size(); ++j)
      t[j] = (1.0 - rate) * t[j] + rate * o[j];
  }
}

inline void copy_values(ParamList& from, ParamList& to) {
  soft_update(from, to, 1.0);
}

// Actor, two critics, their target copies, and the entropy temperature.
class HrlModel {
 public:
  HrlModel() = default;
  HrlModel(const LmpSizes& sz, int critic_hidden, Rng& rng)
      : sizes_(sz),
        actor_(sz, rng),
        q1_(sz, sz.latent, critic_hidden, rng),
        q2_(sz, sz.latent, critic_hidden, rng),
        t1_(sz, sz.latent, critic_hidden, rng),
        t2_(sz, sz.latent, critic_hidden, rng),
        log_alpha_(Tensor::param({1}, {0.0})) {
    sync_targets();
  }

  const LmpSizes& sizes() const { return sizes_; }
  const PlanPrior& actor() const { return actor_; }
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

  // The prior and the actor are structurally identical, so a positional
  // value copy is a faithful weight transfer.
  void copy_prior(PlanPrior& prior) {
    ParamList src;
    prior.collect("actor", src);
    ParamList dst = actor_params();
    copy_values(src, dst);
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
  PlanPrior actor_;
  Critic q1_, q2_, t1_, t2_;
  Tensor log_alpha_;
};

// ---------------------------------------------------------------------------
// Plain-value helpers (no graph): actor sampling for targets and the
// pessimism set. Formulas mirror reparam_sample / tanh_gauss_logprob.
// ---------------------------------------------------------------------------

namespace detail {

struct ActorEval {
  std::vector<double> mean;
  std::vector<double> log_std;
};

inline ActorEval actor_values(const PlanPrior& actor, const Tensor& s,
                              const Tensor& s_g) {
  GaussHead d = actor(s, s_g);
  return {d.mean.value(), d.log_std.value()};
}

inline double softplus_val(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Draws eps row-major over [B, L]; returns pre-squash samples and fills
// logpi per row (tanh-corrected Gaussian log-likelihood).
inline std::vector<double> sample_actor_rows(const ActorEval& d, int B, int L,
                                             Rng& rng,
                                             std::vector<double>* logpi) {
  std::vector<double> z_pre(static_cast<size_t>(B) * L);
  if (logpi) logpi->assign(static_cast<size_t>(B), 0.0);
  for (int b = 0; b < B; ++b) {
    for (int l = 0; l < L; ++l) {
      const size_t i = static_cast<size_t>(b) * L + l;
      const double eps = rng.normal();
      const double sd = std::exp(d.log_std[i]);
      z_pre[i] = d.mean[i] + sd * eps;
      if (logpi) {
        (*logpi)[static_cast<size_t>(b)] +=
            -0.5 * eps * eps - d.log_std[i] - 0.5 * kLogTwoPi -
            2.0 * (kLogTwo - z_pre[i] - softplus_val(-2.0 * z_pre[i]));
      }
    }
  }
  return z_pre;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct CqlHyperParams {
  double gamma = 0.95;
  double tau = 0.005;
  double cql_alpha = 1.0;
  int ood_samples = 4;  // per family: uniform and actor
  double target_entropy = -16.0;
};

// Backup values, one per row. Rows with reward 1 are terminal: the target
// is exactly 1 with no bootstrap. Other rows bootstrap through the minimum
// of the target critics at an actor-sampled plan.
// Draws: one eps block [B, L] row-major, consumed for every row.
inline std::vector<double> bellman_targets(HrlModel& model,
                                           const PlanBatch& batch,
                                           double gamma, Rng& rng) {
  const int B = batch.batch;
  const int L = model.sizes().latent;
  detail::ActorEval d =
      detail::actor_values(model.actor(), batch.s_next, batch.s_g);
  std::vector<double> z_pre =
      detail::sample_actor_rows(d, B, L, rng, nullptr);
  std::vector<double> z(z_pre.size());
  for (size_t i = 0; i < z.size(); ++i) z[i] = std::tanh(z_pre[i]);
  Tensor zt = Tensor::constant({B, L}, std::move(z));
  const std::vector<double> q1 =
      model.target1()(batch.s_next, zt, batch.s_g).value();
  const std::vector<double> q2 =
      model.target2()(batch.s_next, zt, batch.s_g).value();
  std::vector<double> y(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    const size_t i = static_cast<size_t>(b);
    y[i] = batch.r[i] == 1.0 ? 1.0 : gamma * std::min(q1[i], q2[i]);
  }
  return y;
}

struct CriticLossParts {
  Tensor loss;  // sum over both critics of mse + alpha * gap
  double mse1 = 0.0, mse2 = 0.0;
  double gap1 = 0.0, gap2 = 0.0;  // logsumexp minus dataset q
  double mean_q = 0.0;            // dataset-plan q averaged over critics
};

// Conservative critic objective. Per critic: MSE against the supplied
// backup plus cql_alpha times (mean logsumexp over a plan set minus the
// mean dataset-plan value). The set per row: ood_samples uniform plans with
// importance correction L*log 2, ood_samples actor plans corrected by
// -log pi, and the dataset plan.
// Draws, after bellman_targets: uniform blocks [B, L] row-major, one per
// uniform sample; then actor eval at (s, s_g) and eps blocks [B, L]
// row-major, one per actor sample.
inline CriticLossParts cql_critic_loss(HrlModel& model, const PlanBatch& batch,
                                       const std::vector<double>& y,
                                       const CqlHyperParams& hp, Rng& rng) {
  const int B = batch.batch;
  const int L = model.sizes().latent;
  const double correction = L * kLogTwo;  // -log of the uniform cube density

  std::vector<Tensor> plan_cols;
  std::vector<double> col_shift;
  for (int v = 0; v < hp.ood_samples; ++v) {
    std::vector<double> u(static_cast<size_t>(B) * L);
    for (double& x : u) x = rng.uniform(-1.0, 1.0);
    plan_cols.push_back(Tensor::constant({B, L}, std::move(u)));
    col_shift.push_back(correction);
  }
  detail::ActorEval d = detail::actor_values(model.actor(), batch.s, batch.s_g);
  std::vector<std::vector<double>> actor_logpi;
  for (int v = 0; v < hp.ood_samples; ++v) {
    std::vector<double> logpi;
    std::vector<double> z_pre = detail::sample_actor_rows(d, B, L, rng, &logpi);
    for (double& x : z_pre) x = std::tanh(x);
    plan_cols.push_back(Tensor::constant({B, L}, std::move(z_pre)));
    col_shift.push_back(0.0);  // corrected per row below
    actor_logpi.push_back(std::move(logpi));
  }
  plan_cols.push_back(batch.z);
  col_shift.push_back(0.0);

  Tensor y_t = Tensor::constant({B}, y);
  const Critic* critics[2] = {&model.q1(), &model.q2()};
  CriticLossParts parts;
  Tensor total;
  for (int c = 0; c < 2; ++c) {
    const Critic& q = *critics[c];
    Tensor q_data = reshape(q(batch.s, batch.z, batch.s_g), {B});
    Tensor mse = mean_all(square_t(sub(q_data, y_t)));

    Tensor cols;
    for (size_t v = 0; v < plan_cols.size(); ++v) {
      Tensor qc = q(batch.s, plan_cols[v], batch.s_g);
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
    std::string dump = "critic loss is not finite; first rows:";
    for (int b = 0; b < B && b < 4; ++b) {
      dump += " [r=" + format_double(batch.r[static_cast<size_t>(b)]) +
              " y=" + format_double(y[static_cast<size_t>(b)]) + "]";
    }
    throw DivergenceError(dump);
  }
  return parts;
}

struct ActorLossParts {
  Tensor loss;
  double mean_logpi = 0.0;
};

// Reparameterized actor objective: entropy_coef * log pi minus the minimum
// critic value, averaged over the batch. Draws one eps block [B, L]
// row-major through the graph sampler.
inline ActorLossParts cql_actor_loss(HrlModel& model, const PlanBatch& batch,
                                     double entropy_coef, Rng& rng) {
  const int B = batch.batch;
  GaussHead dist = model.actor()(batch.s, batch.s_g);
  Tensor z_pre = reparam_sample(dist, rng);
  Tensor z = tanh_t(z_pre);
  Tensor logpi = tanh_gauss_logprob(z_pre, dist);
  Tensor q1 = reshape(model.q1()(batch.s, z, batch.s_g), {B});
  Tensor q2 = reshape(model.q2()(batch.s, z, batch.s_g), {B});
  Tensor qmin = min_elem(q1, q2);
  ActorLossParts parts;
  parts.loss = mean_all(sub(mul_scalar(logpi, entropy_coef), qmin));
  parts.mean_logpi = mean_all(logpi).item();
  return parts;
}

// Temperature objective on log alpha: descending it raises the coefficient
// while the policy's entropy sits below the target and lowers it above.
inline Tensor entropy_coef_loss(Tensor& log_alpha, double mean_logpi,
                                double target_entropy) {
  return mul_scalar(log_alpha, -(mean_logpi + target_entropy));
}

// ---------------------------------------------------------------------------
// Behavior-cloning warmstart
// ---------------------------------------------------------------------------

// Fits the actor's Gaussian to the encoder's stored plan samples,
// conditioning on each window's own endpoints. Returns per-epoch mean
// losses. Draws per step: batch pool indices, then nothing else.
inline std::vector<double> bc_warmstart(HrlModel& model,
                                        const TransitionPool& pool, int epochs,
                                        int batch, double lr, Rng& rng) {
  const int L = model.sizes().latent;
  ParamList params = model.actor_params();
  Adam opt(params, {lr, 0.9, 0.999, 1e-8});
  std::vector<double> epoch_means;
  const int steps = static_cast<int>(pool.size()) / batch > 0
                        ? static_cast<int>(pool.size()) / batch
                        : 1;
  for (int e = 0; e < epochs; ++e) {
    double sum = 0.0;
    for (int i = 0; i < steps; ++i) {
      std::vector<double> s(static_cast<size_t>(batch) * kObsDim);
      std::vector<double> sg(static_cast<size_t>(batch) * kObsDim);
      std::vector<double> zp(static_cast<size_t>(batch) * L);
      for (int b = 0; b < batch; ++b) {
        const EncodedWindow& w =
            pool.at(static_cast<size_t>(rng.uniform_int(pool.size())));
        for (int d = 0; d < kObsDim; ++d) {
          s[static_cast<size_t>(b) * kObsDim + d] = w.s_t[static_cast<size_t>(d)];
          sg[static_cast<size_t>(b) * kObsDim + d] =
              w.s_next[static_cast<size_t>(d)];
        }
        for (int d = 0; d < L; ++d)
          zp[static_cast<size_t>(b) * L + d] = w.z_pre[static_cast<size_t>(d)];
      }
      GaussHead dist = model.actor()(
          Tensor::constant({batch, kObsDim}, std::move(s)),
          Tensor::constant({batch, kObsDim}, std::move(sg)));
      Tensor loss = mean_all(neg(tanh_gauss_logprob(
          Tensor::constant({batch, L}, std::move(zp)), dist)));
      backward(loss);
      opt.step();
      sum += loss.item();
    }
    epoch_means.push_back(sum / steps);
  }
  return epoch_means;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct HrlTrainConfig {
  int epochs = 10;
  int steps_per_epoch = 500;
  int batch = 64;
  double critic_lr = 3e-4;
  double actor_lr = 1e-4;
  double alpha_lr = 3e-4;
  CqlHyperParams cql;
  GoalSamplerConfig goals;
  int warmstart_epochs = 5;
  int pool_size = 8192;
  int critic_hidden = 64;
  uint64_t seed = 0;
  std::string out_dir;
  bool resume = false;
};

struct HrlStepStats {
  long step = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double cons_gap = 0.0;
  double entropy_coef = 0.0;
  double mean_q = 0.0;
  double frac_r1 = 0.0;
};

class HrlTrainer {
 public:
  // The plan model only seeds the pool (frozen encoder) and the actor's
  // initial weights; no gradient ever reaches it.
  HrlTrainer(HrlModel& model, LmpModel& lmp, const Dataset& data,
             const HrlTrainConfig& cfg)
      : model_(&model),
        lmp_(&lmp),
        cfg_(cfg),
        pool_([&] {
          Rng pool_rng = Rng::derive(cfg.seed, "hrl/pool");
          return TransitionPool(data, lmp, cfg.pool_size, pool_rng);
        }()),
        critic_opt_(model.critic_params(), {cfg.critic_lr, 0.9, 0.999, 1e-8}),
        actor_opt_(model.actor_params(), {cfg.actor_lr, 0.9, 0.999, 1e-8}),
        alpha_opt_({{"alpha/log", model.log_alpha()}},
                   {cfg.alpha_lr, 0.9, 0.999, 1e-8}),
        rng_(Rng::derive(cfg.seed, "hrl/train")) {}

  const TransitionPool& pool() const { return pool_; }

  HrlStepStats train_step() {
    PlanBatch batch = make_plan_batch(pool_, cfg_.goals, rng_, cfg_.batch);
    const std::vector<double> y =
        bellman_targets(*model_, batch, cfg_.cql.gamma, rng_);
    CriticLossParts cp = cql_critic_loss(*model_, batch, y, cfg_.cql, rng_);
    backward(cp.loss);
    critic_opt_.step();

    ActorLossParts ap =
        cql_actor_loss(*model_, batch, model_->entropy_coef(), rng_);
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

  // Fresh runs copy the prior into the actor and behavior-clone it before
  // any critic update; epoch 0 checkpoints that state so resumption never
  // repeats the warmstart. The divergence guard watches critic-loss epoch
  // means, the term with a fixed-point scale.
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
      model_->copy_prior(lmp_->prior());
      if (cfg_.warmstart_epochs > 0)
        bc_warmstart(*model_, pool_, cfg_.warmstart_epochs, cfg_.batch,
                     cfg_.actor_lr, rng_);
      model_->save(epoch_path(0, ".ckpt"));
      save_state(epoch_path(0, ".state"));
      start_epoch = 0;
    }
    CsvWriter csv(csv_path(),
                  {"step", "critic_loss", "actor_loss", "cons_gap",
                   "entropy_coef", "mean_q", "frac_r1"},
                  /*append=*/critic_opt_.step_count() > 0);

    for (int epoch = start_epoch; epoch < cfg_.epochs; ++epoch) {
      double epoch_sum = 0.0;
      for (int i = 0; i < cfg_.steps_per_epoch; ++i) {
        const HrlStepStats st = train_step();
        epoch_sum += st.critic_loss;
        csv.row({std::to_string(st.step), format_double(st.critic_loss),
                 format_double(st.actor_loss), format_double(st.cons_gap),
                 format_double(st.entropy_coef), format_double(st.mean_q),
                 format_double(st.frac_r1)});
      }
      const double epoch_mean = epoch_sum / cfg_.steps_per_epoch;
      if (epoch == start_epoch && first_epoch_mean_ == 0.0)
        first_epoch_mean_ = epoch_mean;
      diverged_epochs_ = divergence_guard_update(epoch_mean, first_epoch_mean_,
                                                 diverged_epochs_);
      model_->save(epoch_path(epoch + 1, ".ckpt"));
      save_state(epoch_path(epoch + 1, ".state"));
    }
    model_->save((fs::path(cfg_.out_dir) / "hrl_latest.ckpt").string());
  }

  Rng& rng() { return rng_; }

  std::string csv_path() const {
    return (std::filesystem::path(cfg_.out_dir) / "hrl_train.csv").string();
  }

  std::string epoch_path(int epoch, const char* ext) const {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "hrl_epoch_%04d%s", epoch, ext);
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

  HrlModel* model_;
  LmpModel* lmp_;
  HrlTrainConfig cfg_;
  TransitionPool pool_;
  Adam critic_opt_, actor_opt_, alpha_opt_;
  Rng rng_;
  double first_epoch_mean_ = 0.0;
  int diverged_epochs_ = 0;
};

}  // namespace taco
