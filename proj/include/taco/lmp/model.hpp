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

// Latent-plan model: a sequence encoder infers a plan distribution from a
// trajectory window, a goal-conditioned prior predicts it from endpoint
// states alone, and a recurrent decoder reconstructs the actions given the
// plan. Actions enter and leave the model normalized: deltas divided by the
// per-step clip, gripper kept at +-1.

#include <cmath>
#include <string>
#include <vector>

#include "taco/core/checkpoint.hpp"
#include "taco/core/distributions.hpp"
#include "taco/core/nn.hpp"
#include "taco/core/rng.hpp"
#include "taco/core/tensor.hpp"
#include "taco/data/windows.hpp"
#include "taco/env/playtable.hpp"

namespace taco {

struct LmpSizes {
  int obs_embed_hidden = 64;
  int obs_embed = 32;
  int enc_width = 64;
  int enc_ff = 128;
  int enc_heads = 2;
  int enc_blocks = 2;
  int latent = 16;
  int prior_hidden = 64;
  int dec_hidden = 128;
  int dec_layers = 2;
  double log_std_min = -6.0;
  double log_std_max = 2.0;
  MixtureSpec mixture{};
};

// Mixture head layout per action delta dim d (dim-major):
// [d*30, d*30+10) component logits, [+10, +20) means, [+20, +30) log scales;
// the final column is the gripper logit.
constexpr int kMixParamsPerDim = 30;
constexpr int kDecHeadCols = 2 * kMixParamsPerDim + 1;
constexpr int kGripperCol = 2 * kMixParamsPerDim;

inline double normalize_delta(double d) {
  double v = d / kActionClip;
  // Stored float32 values can overshoot the clip by an ulp.
  return v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
}

struct ObsEmbedder {
  Mlp mlp;

  ObsEmbedder() = default;
  ObsEmbedder(const LmpSizes& sz, Rng& rng)
      : mlp({kObsDim, sz.obs_embed_hidden, sz.obs_embed}, rng, Act::Tanh) {}

  Tensor operator()(const Tensor& obs) const { return mlp(obs); }

  void collect(const std::string& prefix, ParamList& out) {
    mlp.collect(prefix, out);
  }
};

// ---------------------------------------------------------------------------
// Sequence encoder
// ---------------------------------------------------------------------------

struct EncoderBlock {
  LayerNormLayer ln1, ln2;
  Tensor Wq, Wk, Wv, Wo;
  Dense ff1, ff2;

  EncoderBlock() = default;
  EncoderBlock(int width, int ff, Rng& rng)
      : ln1(width),
        ln2(width),
        Wq(xavier_uniform(width, width, rng)),
        Wk(xavier_uniform(width, width, rng)),
        Wv(xavier_uniform(width, width, rng)),
        Wo(xavier_uniform(width, width, rng)),
        ff1(width, ff, rng),
        ff2(ff, width, rng) {}

  void collect(const std::string& prefix, ParamList& out) {
    ln1.collect(prefix + "/ln1", out);
    ln2.collect(prefix + "/ln2", out);
    out.push_back({prefix + "/attn/Wq", Wq});
    out.push_back({prefix + "/attn/Wk", Wk});
    out.push_back({prefix + "/attn/Wv", Wv});
    out.push_back({prefix + "/attn/Wo", Wo});
    ff1.collect(prefix + "/ff1", out);
    ff2.collect(prefix + "/ff2", out);
  }
};

class PlanEncoder {
 public:
  PlanEncoder() = default;
  PlanEncoder(const LmpSizes& sz, Rng& rng)
      : sz_(sz),
        in_proj_(kObsDim + kActDim, sz.enc_width, rng),
        pos_emb_(Tensor::param(
            {kWindowLen, sz.enc_width},
            std::vector<double>(
                static_cast<size_t>(kWindowLen) * sz.enc_width, 0.0))),
        ln_final_(sz.enc_width),
        mean_head_(sz.enc_width, sz.latent, rng),
        log_std_head_(sz.enc_width, sz.latent, rng) {
    for (int b = 0; b < sz.enc_blocks; ++b)
      blocks_.emplace_back(sz.enc_width, sz.enc_ff, rng);
  }

  // steps: [B*T, obs+act] with normalized actions; mask: B*T entries, 1 for
  // real steps. Pre-norm attention over keys masked to the real steps, then
  // mask-weighted mean pooling.
  GaussHead operator()(const Tensor& steps, const std::vector<double>& mask,
                       int batch) const {
    const int T = kWindowLen;
    const int W = sz_.enc_width;
    const int H = sz_.enc_heads;
    const int dh = W / H;

    Tensor x3 = add_bcast0(reshape(in_proj_(steps), {batch, T, W}), pos_emb_);

    // Additive key bias: exactly -1e30 on padded steps so their post-softmax
    // weight underflows to zero and pad content cannot leak into real rows.
    std::vector<double> bias(static_cast<size_t>(batch) * T * T, 0.0);
    for (int b = 0; b < batch; ++b)
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j)
          if (mask[static_cast<size_t>(b) * T + j] <= 0.0)
            bias[(static_cast<size_t>(b) * T + i) * T + j] = -1e30;
    Tensor bias3 = Tensor::constant({batch, T, T}, std::move(bias));

    for (const EncoderBlock& blk : blocks_) {
      Tensor h2 = blk.ln1(reshape(x3, {batch * T, W}));
      Tensor q2 = matmul(h2, blk.Wq);
      Tensor k2 = matmul(h2, blk.Wk);
      Tensor v2 = matmul(h2, blk.Wv);
      Tensor ctx;
      for (int h = 0; h < H; ++h) {
        Tensor qh = reshape(slice_lastdim(q2, h * dh, (h + 1) * dh),
                            {batch, T, dh});
        Tensor kh = reshape(slice_lastdim(k2, h * dh, (h + 1) * dh),
                            {batch, T, dh});
        Tensor vh = reshape(slice_lastdim(v2, h * dh, (h + 1) * dh),
                            {batch, T, dh});
        Tensor scores = add(
            mul_scalar(bmm(qh, transpose_last(kh)), 1.0 / std::sqrt(dh)),
            bias3);
        Tensor ctx_h =
            reshape(bmm(softmax_lastdim(scores), vh), {batch * T, dh});
        ctx = h == 0 ? ctx_h : concat_lastdim(ctx, ctx_h);
      }
      x3 = add(x3, reshape(matmul(ctx, blk.Wo), {batch, T, W}));

      Tensor f2 = blk.ln2(reshape(x3, {batch * T, W}));
      Tensor ff = blk.ff2(relu_t(blk.ff1(f2)));
      x3 = add(x3, reshape(ff, {batch, T, W}));
    }

    Tensor y2 = ln_final_(reshape(x3, {batch * T, W}));

    // Mask-weighted mean over the real steps of each window.
    std::vector<double> mask_rep(static_cast<size_t>(batch) * T * W);
    std::vector<double> inv_len(static_cast<size_t>(batch) * W);
    for (int b = 0; b < batch; ++b) {
      double len = 0.0;
      for (int t = 0; t < T; ++t) len += mask[static_cast<size_t>(b) * T + t];
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < W; ++j)
          mask_rep[(static_cast<size_t>(b) * T + t) * W + j] =
              mask[static_cast<size_t>(b) * T + t];
      for (int j = 0; j < W; ++j)
        inv_len[static_cast<size_t>(b) * W + j] = 1.0 / len;
    }
    Tensor masked = mul(reshape(y2, {batch, T, W}),
                        Tensor::constant({batch, T, W}, std::move(mask_rep)));
    Tensor pooled = mul(sum_lastdim(transpose_last(masked)),
                        Tensor::constant({batch, W}, std::move(inv_len)));

    return {mean_head_(pooled),
            clamp_t(log_std_head_(pooled), sz_.log_std_min, sz_.log_std_max)};
  }

  void collect(const std::string& prefix, ParamList& out) {
    in_proj_.collect(prefix + "/in_proj", out);
    out.push_back({prefix + "/pos", pos_emb_});
    for (size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect(prefix + "/b" + std::to_string(i), out);
    ln_final_.collect(prefix + "/ln_f", out);
    mean_head_.collect(prefix + "/mean", out);
    log_std_head_.collect(prefix + "/log_std", out);
  }

 private:
  LmpSizes sz_;
  Dense in_proj_;
  Tensor pos_emb_;
  std::vector<EncoderBlock> blocks_;
  LayerNormLayer ln_final_;
  Dense mean_head_, log_std_head_;
};

// ---------------------------------------------------------------------------
// Goal-conditioned prior
// ---------------------------------------------------------------------------

class PlanPrior {
 public:
  PlanPrior() = default;
  PlanPrior(const LmpSizes& sz, Rng& rng)
      : sz_(sz),
        emb_(sz, rng),
        trunk_({2 * sz.obs_embed, sz.prior_hidden, sz.prior_hidden,
                sz.prior_hidden},
               rng, Act::Tanh),
        mean_head_(sz.prior_hidden, sz.latent, rng),
        log_std_head_(sz.prior_hidden, sz.latent, rng) {}

  // One embedder serves both endpoints.
  GaussHead operator()(const Tensor& s_now, const Tensor& s_goal) const {
    Tensor h = tanh_t(trunk_(concat_lastdim(emb_(s_now), emb_(s_goal))));
    return {mean_head_(h),
            clamp_t(log_std_head_(h), sz_.log_std_min, sz_.log_std_max)};
  }

  void collect(const std::string& prefix, ParamList& out) {
    emb_.collect(prefix + "/emb", out);
    trunk_.collect(prefix + "/trunk", out);
    mean_head_.collect(prefix + "/mean", out);
    log_std_head_.collect(prefix + "/log_std", out);
  }

 private:
  LmpSizes sz_;
  ObsEmbedder emb_;
  Mlp trunk_;
  Dense mean_head_, log_std_head_;
};

// ---------------------------------------------------------------------------
// Plan-conditioned action decoder
// ---------------------------------------------------------------------------

class PlanDecoder {
 public:
  PlanDecoder() = default;
  PlanDecoder(const LmpSizes& sz, Rng& rng)
      : sz_(sz),
        emb_(sz, rng),
        gru_(sz.obs_embed + sz.latent, sz.dec_hidden, sz.dec_layers, rng),
        head_(sz.dec_hidden, kDecHeadCols, rng) {}

  struct NllResult {
    Tensor per_window;  // [B]: masked negative log-likelihood sums
    long clamped = 0;   // targets clamped into the mixture support
  };

  // Teacher-forced negative log-likelihood of a window batch under plan z.
  // Per step and window: discretized mixture NLL for both deltas plus
  // binary cross-entropy for the gripper, zeroed on padded steps.
  NllResult rollout_nll(const std::vector<Tensor>& obs_steps, const Tensor& z,
                        const std::vector<std::vector<double>>& ax,
                        const std::vector<std::vector<double>>& ay,
                        const std::vector<std::vector<double>>& g01,
                        const std::vector<std::vector<double>>& mask) const {
    const int B = z.dim(0);
    NllResult res;
    std::vector<Tensor> state = gru_.initial_state(B);
    Tensor total = Tensor::zeros({B});
    for (size_t t = 0; t < obs_steps.size(); ++t) {
      Tensor out = head_(
          gru_.step(concat_lastdim(emb_(obs_steps[t]), z), state));
      Tensor nll = step_nll(out, ax[t], ay[t], g01[t], &res.clamped);
      total = add(total, mul(nll, Tensor::constant({B}, mask[t])));
    }
    res.per_window = total;
    return res;
  }

  // NLL of one decoder output row against one normalized action.
  Tensor step_nll(const Tensor& head_out, const std::vector<double>& ax,
                  const std::vector<double>& ay, const std::vector<double>& g,
                  long* clamped) const {
    const int B = head_out.dim(0);
    Tensor nll;
    for (int d = 0; d < 2; ++d) {
      const int base = d * kMixParamsPerDim;
      // The mixture op floors the log scales internally.
      Tensor lp = logistic_mixture_logprob(
          slice_lastdim(head_out, base, base + 10),
          slice_lastdim(head_out, base + 10, base + 20),
          slice_lastdim(head_out, base + 20, base + 30), d == 0 ? ax : ay,
          sz_.mixture, clamped);
      nll = d == 0 ? neg(lp) : sub(nll, lp);
    }
    Tensor bce = reshape(
        bce_logits(slice_lastdim(head_out, kGripperCol, kGripperCol + 1), g),
        {B});
    return add(nll, bce);
  }

  std::vector<Tensor> make_state(int batch) const {
    return gru_.initial_state(batch);
  }

  // Single deterministic or sampled control step. obs is raw (unnormalized);
  // the returned action is in environment units.
  EnvAction act(const Observation& obs, const std::vector<double>& z,
                std::vector<Tensor>& state, bool greedy, Rng* rng) const {
    Tensor o = Tensor::constant({1, kObsDim},
                                std::vector<double>(obs.begin(), obs.end()));
    Tensor zt = Tensor::constant({1, sz_.latent}, z);
    Tensor out = head_(gru_.step(concat_lastdim(emb_(o), zt), state));
    const std::vector<double>& v = out.value();

    double a[2];
    for (int d = 0; d < 2; ++d) {
      const size_t base = static_cast<size_t>(d) * kMixParamsPerDim;
      a[d] = greedy ? mixture_greedy_value(&v[base], &v[base + 10],
                                           &v[base + 20], sz_.mixture)
                    : mixture_sample_value(&v[base], &v[base + 10],
                                           &v[base + 20], sz_.mixture, *rng);
    }
    double grip;
    if (greedy) {
      grip = v[kGripperCol] >= 0.0 ? 1.0 : -1.0;
    } else {
      const double p = 1.0 / (1.0 + std::exp(-v[kGripperCol]));
      grip = rng->bernoulli(p) ? 1.0 : -1.0;
    }
    return {a[0] * kActionClip, a[1] * kActionClip, grip};
  }

  void collect(const std::string& prefix, ParamList& out) {
    emb_.collect(prefix + "/emb", out);
    gru_.collect(prefix, out);
    head_.collect(prefix + "/head", out);
  }

 private:
  LmpSizes sz_;
  ObsEmbedder emb_;
  GruStack gru_;
  Dense head_;
};

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

class LmpModel {
 public:
  LmpModel() = default;
  LmpModel(const LmpSizes& sz, Rng& rng)
      : sizes_(sz), encoder_(sz, rng), prior_(sz, rng), decoder_(sz, rng) {}

  const LmpSizes& sizes() const { return sizes_; }
  const PlanEncoder& encoder() const { return encoder_; }
  const PlanPrior& prior() const { return prior_; }
  PlanPrior& prior() { return prior_; }
  const PlanDecoder& decoder() const { return decoder_; }

  ParamList params() {
    ParamList out;
    encoder_.collect("enc", out);
    prior_.collect("prior", out);
    decoder_.collect("dec", out);
    return out;
  }

  void save(const std::string& path) { save_checkpoint(path, params()); }
  void load(const std::string& path) {
    ParamList p = params();
    load_into(p, path);
  }

 private:
  LmpSizes sizes_;
  PlanEncoder encoder_;
  PlanPrior prior_;
  PlanDecoder decoder_;
};

}  // namespace taco
