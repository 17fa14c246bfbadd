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

// Latent-plan training loop: reconstruction plus a beta-weighted balanced
// KL between the sequence posterior and the goal-conditioned prior. Every
// epoch checkpoints the model and a sidecar trainer state (optimizer
// moments, generator state, progress counters), so an interrupted run
// resumes bit-for-bit.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "taco/core/adam.hpp"
#include "taco/core/checkpoint.hpp"
#include "taco/core/csv.hpp"
#include "taco/core/distributions.hpp"
#include "taco/data/windows.hpp"
#include "taco/lmp/model.hpp"

namespace taco {

inline double bits_to_double(uint64_t u) {
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

inline uint64_t double_to_bits(double d) {
  uint64_t u;
  std::memcpy(&u, &d, 8);
  return u;
}

// One training batch of trajectory windows, already split into the layouts
// the model components consume.
struct WindowBatch {
  int batch = 0;
  Tensor enc_steps;                        // [B*T, obs+act] const
  std::vector<double> mask_flat;           // B*T
  std::vector<Tensor> obs_steps;           // T tensors [B, obs] const
  std::vector<std::vector<double>> mask;   // T x [B]
  std::vector<std::vector<double>> ax, ay, g01;  // T x [B] targets
  Tensor s_start, s_goal;                  // [B, obs] const
  std::vector<WindowRef> refs;
};

inline WindowBatch make_window_batch(const Dataset& ds, Rng& rng, int batch) {
  const int T = kWindowLen;
  WindowBatch out;
  out.batch = batch;
  out.obs_steps.reserve(T);
  out.mask.assign(T, std::vector<double>(batch));
  out.ax.assign(T, std::vector<double>(batch));
  out.ay.assign(T, std::vector<double>(batch));
  out.g01.assign(T, std::vector<double>(batch));
  out.mask_flat.resize(static_cast<size_t>(batch) * T);

  std::vector<double> enc(static_cast<size_t>(batch) * T * (kObsDim + kActDim));
  std::vector<std::vector<double>> obs_step(
      T, std::vector<double>(static_cast<size_t>(batch) * kObsDim));
  std::vector<double> s0(static_cast<size_t>(batch) * kObsDim);
  std::vector<double> sg(static_cast<size_t>(batch) * kObsDim);

  for (int b = 0; b < batch; ++b) {
    const WindowRef ref = sample_window_ref(ds, rng);
    out.refs.push_back(ref);
    const PaddedWindow w = materialize_window(ds, ref);
    for (int t = 0; t < T; ++t) {
      const size_t row = static_cast<size_t>(b) * T + t;
      double* e = enc.data() + row * (kObsDim + kActDim);
      for (int i = 0; i < kObsDim; ++i) e[i] = w.obs[t][i];
      e[kObsDim + 0] = normalize_delta(w.act[t].dx);
      e[kObsDim + 1] = normalize_delta(w.act[t].dy);
      e[kObsDim + 2] = w.act[t].gripper;
      out.mask_flat[row] = w.mask[t];
      out.mask[t][b] = w.mask[t];
      out.ax[t][b] = normalize_delta(w.act[t].dx);
      out.ay[t][b] = normalize_delta(w.act[t].dy);
      out.g01[t][b] = w.act[t].gripper > 0.0 ? 1.0 : 0.0;
      for (int i = 0; i < kObsDim; ++i)
        obs_step[t][static_cast<size_t>(b) * kObsDim + i] = w.obs[t][i];
    }
    for (int i = 0; i < kObsDim; ++i) {
      s0[static_cast<size_t>(b) * kObsDim + i] = w.start_obs[i];
      sg[static_cast<size_t>(b) * kObsDim + i] = w.goal_obs[i];
    }
  }

  out.enc_steps = Tensor::constant({batch * T, kObsDim + kActDim},
                                   std::move(enc));
  for (int t = 0; t < T; ++t)
    out.obs_steps.push_back(
        Tensor::constant({batch, kObsDim}, std::move(obs_step[t])));
  out.s_start = Tensor::constant({batch, kObsDim}, std::move(s0));
  out.s_goal = Tensor::constant({batch, kObsDim}, std::move(sg));
  return out;
}

struct LmpLossParts {
  Tensor loss;       // scalar: mean nll + beta * mean kl
  Tensor nll_mean;   // scalar
  Tensor kl_mean;    // scalar
  long clamped = 0;  // mixture targets clamped into support
  std::vector<double> z_pre;  // pre-squash plan samples, row-major [B, latent]
};

// Exactly one plan draw per window per call; z_draws (when given) advances
// by the batch size so callers can assert that contract. The KL acts on the
// raw Gaussian; the decoder sees the tanh-squashed plan, so every plan it is
// ever trained on lives in the same (-1,1) cube the high-level policy emits.
inline LmpLossParts lmp_loss(const LmpModel& model, const WindowBatch& batch,
                             double beta, double kl_alpha, Rng& rng,
                             long* z_draws = nullptr) {
  LmpLossParts parts;
  GaussHead q = model.encoder()(batch.enc_steps, batch.mask_flat, batch.batch);
  GaussHead p = model.prior()(batch.s_start, batch.s_goal);
  Tensor z_pre = reparam_sample(q, rng);
  if (z_draws) *z_draws += batch.batch;
  parts.z_pre = z_pre.value();
  Tensor z = tanh_t(z_pre);

  PlanDecoder::NllResult nll = model.decoder().rollout_nll(
      batch.obs_steps, z, batch.ax, batch.ay, batch.g01, batch.mask);
  parts.clamped = nll.clamped;
  parts.nll_mean = mean_all(nll.per_window);
  parts.kl_mean = mean_all(kl_balanced(q, p, kl_alpha));
  parts.loss = add(parts.nll_mean, mul_scalar(parts.kl_mean, beta));
  return parts;
}

struct LmpTrainConfig {
  int epochs = 10;
  int steps_per_epoch = 500;
  int batch = 64;
  double lr = 1e-4;
  double beta = 1e-3;
  double kl_alpha = 0.8;
  uint64_t seed = 0;
  std::string out_dir;
  bool resume = false;
};

struct LmpStepStats {
  long step = 0;
  double nll = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

// Escalating-loss watchdog shared by the training loops: an epoch whose
// mean loss exceeds ten times the first epoch's mean counts as diverged;
// three in a row abort the run. Returns the updated consecutive count.
inline int divergence_guard_update(double epoch_mean, double first_epoch_mean,
                                   int consecutive) {
  if (first_epoch_mean != 0.0 && epoch_mean > 10.0 * first_epoch_mean) {
    if (consecutive + 1 >= 3)
      throw DivergenceError("training diverged: epoch mean loss " +
                            std::to_string(epoch_mean) +
                            " vs first epoch mean " +
                            std::to_string(first_epoch_mean));
    return consecutive + 1;
  }
  return 0;
}

class LmpTrainer {
 public:
  LmpTrainer(LmpModel& model, const Dataset& data, const LmpTrainConfig& cfg)
      : model_(&model),
        data_(&data),
        cfg_(cfg),
        opt_(model.params(), {cfg.lr, 0.9, 0.999, 1e-8}),
        rng_(Rng::derive(cfg.seed, "lmp/train")) {}

  LmpStepStats train_step() {
    WindowBatch batch = make_window_batch(*data_, rng_, cfg_.batch);
    LmpLossParts parts =
        lmp_loss(*model_, batch, cfg_.beta, cfg_.kl_alpha, rng_, &z_draws_);
    backward(parts.loss);
    LmpStepStats st;
    st.grad_norm = global_grad_norm(opt_.params());
    opt_.step();
    st.step = opt_.step_count();
    st.nll = parts.nll_mean.item();
    st.kl = parts.kl_mean.item();
    st.total = parts.loss.item();
    return st;
  }

  // Full training run with per-epoch checkpoints. Throws DivergenceError
  // when the epoch-mean loss sits above ten times the first epoch's mean
  // for three consecutive epochs.
  void run() {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir);
    int start_epoch = 0;
    if (cfg_.resume) {
      const int last = latest_epoch_on_disk();
      if (last >= 0) {
        model_->load(epoch_path(last, ".ckpt"));
        load_state(epoch_path(last, ".state"));
        start_epoch = last;
        trim_csv(opt_.step_count());
      }
    }
    CsvWriter csv(csv_path(), {"step", "nll", "kl", "total", "grad_norm"},
                  /*append=*/start_epoch > 0);

    for (int epoch = start_epoch; epoch < cfg_.epochs; ++epoch) {
      double epoch_sum = 0.0;
      for (int i = 0; i < cfg_.steps_per_epoch; ++i) {
        const LmpStepStats st = train_step();
        epoch_sum += st.total;
        csv.row({std::to_string(st.step), format_double(st.nll),
                 format_double(st.kl), format_double(st.total),
                 format_double(st.grad_norm)});
      }
      const double epoch_mean = epoch_sum / cfg_.steps_per_epoch;
      if (epoch == 0 && first_epoch_mean_ == 0.0)
        first_epoch_mean_ = epoch_mean;
      diverged_epochs_ = divergence_guard_update(epoch_mean, first_epoch_mean_,
                                                 diverged_epochs_);
      model_->save(epoch_path(epoch + 1, ".ckpt"));
      save_state(epoch_path(epoch + 1, ".state"));
    }
    model_->save((fs::path(cfg_.out_dir) / "lmp_latest.ckpt").string());
  }

  long z_draws() const { return z_draws_; }
  Rng& rng() { return rng_; }
  Adam& optimizer() { return opt_; }

  std::string csv_path() const {
    return (std::filesystem::path(cfg_.out_dir) / "lmp_train.csv").string();
  }

  std::string epoch_path(int epoch, const char* ext) const {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "lmp_epoch_%04d%s", epoch, ext);
    return (std::filesystem::path(cfg_.out_dir) / buf).string();
  }

  // Sidecar trainer state: optimizer moments, generator state, counters.
  void save_state(const std::string& path) {
    std::vector<CheckpointBlock> blocks;
    const ParamList& params = opt_.params();
    auto& m = opt_.moments_m();
    auto& v = opt_.moments_v();
    for (size_t i = 0; i < params.size(); ++i) {
      blocks.push_back({"adam/m/" + params[i].name,
                        params[i].tensor.shape(), m[i]});
      blocks.push_back({"adam/v/" + params[i].name,
                        params[i].tensor.shape(), v[i]});
    }
    const std::array<uint64_t, 4> st = rng_.state();
    std::vector<double> rng_bits(4);
    for (int i = 0; i < 4; ++i) rng_bits[i] = bits_to_double(st[i]);
    blocks.push_back({"rng/state", {4}, rng_bits});
    blocks.push_back({"progress/step", {1},
                      {static_cast<double>(opt_.step_count())}});
    blocks.push_back({"progress/z_draws", {1},
                      {static_cast<double>(z_draws_)}});
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
    const ParamList& params = opt_.params();
    for (size_t i = 0; i < params.size(); ++i) {
      opt_.moments_m()[i] = find("adam/m/" + params[i].name).values;
      opt_.moments_v()[i] = find("adam/v/" + params[i].name).values;
    }
    const CheckpointBlock& rb = find("rng/state");
    std::array<uint64_t, 4> st;
    for (int i = 0; i < 4; ++i)
      st[static_cast<size_t>(i)] = double_to_bits(rb.values[static_cast<size_t>(i)]);
    rng_.set_state(st);
    opt_.set_step_count(static_cast<long>(find("progress/step").values[0]));
    z_draws_ = static_cast<long>(find("progress/z_draws").values[0]);
    first_epoch_mean_ = find("guard/first_epoch_mean").values[0];
    diverged_epochs_ =
        static_cast<int>(find("guard/diverged_epochs").values[0]);
  }

 private:
  int latest_epoch_on_disk() const {
    namespace fs = std::filesystem;
    int last = -1;
    for (int e = 1; e <= cfg_.epochs; ++e)
      if (fs::exists(epoch_path(e, ".state")) &&
          fs::exists(epoch_path(e, ".ckpt")))
        last = e;
    return last;
  }

  // Drop csv rows past the checkpoint being resumed from, so an interrupted
  // epoch leaves no duplicate steps behind.
  void trim_csv(long max_step) const {
    std::ifstream is(csv_path());
    if (!is) return;
    std::vector<std::string> keep;
    std::string line;
    if (std::getline(is, line)) keep.push_back(line);  // header
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const long step = std::stol(line.substr(0, line.find(',')));
      if (step <= max_step) keep.push_back(line);
    }
    is.close();
    std::ofstream os(csv_path(), std::ios::trunc);
    for (const std::string& l : keep) os << l << '\n';
  }

  LmpModel* model_;
  const Dataset* data_;
  LmpTrainConfig cfg_;
  Adam opt_;
  Rng rng_;
  long z_draws_ = 0;
  double first_epoch_mean_ = 0.0;
  int diverged_epochs_ = 0;
};

}  // namespace taco
