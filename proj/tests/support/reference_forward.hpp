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

// Straight-line recomputation of the model losses in plain double loops,
// sharing no code with the graph engine. Used to cross-check training
// losses end to end: same weights, same inputs, independently written math.

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "taco/core/adam.hpp"
#include "taco/core/tensor.hpp"
#include "taco/lmp/model.hpp"
#include "taco/lmp/trainer.hpp"

namespace taco {
namespace ref {

using Vec = std::vector<double>;

struct Params {
  std::map<std::string, std::pair<std::vector<int>, Vec>> by_name;

  static Params capture(const ParamList& params) {
    Params p;
    for (const NamedParam& np : params)
      p.by_name[np.name] = {np.tensor.shape(), np.tensor.value()};
    return p;
  }

  const Vec& vec(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("reference: no param " + name);
    return it->second.second;
  }

  int rows(const std::string& name) const {
    return by_name.at(name).first.at(0);
  }
  int cols(const std::string& name) const {
    return by_name.at(name).first.at(1);
  }
};

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x < -30.0 ? -30.0 : x));
}

// y[n, out] = x[n, in] * W[in, out] + b
inline Vec dense(const Vec& x, int n, const Params& p,
                 const std::string& prefix) {
  const Vec& W = p.vec(prefix + "/W");
  const Vec& b = p.vec(prefix + "/b");
  const int in = p.rows(prefix + "/W");
  const int out = p.cols(prefix + "/W");
  Vec y(static_cast<size_t>(n) * out);
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < out; ++j) {
      double acc = b[static_cast<size_t>(j)];
      for (int k = 0; k < in; ++k)
        acc += x[static_cast<size_t>(r) * in + k] *
               W[static_cast<size_t>(k) * out + j];
      y[static_cast<size_t>(r) * out + j] = acc;
    }
  return y;
}

inline void tanh_inplace(Vec& v) {
  for (double& x : v) x = std::tanh(x);
}

inline void relu_inplace(Vec& v) {
  for (double& x : v)
    if (x < 0.0) x = 0.0;
}

// Observation embedder: dense-tanh-dense.
inline Vec embed_obs(const Vec& obs, int n, const Params& p,
                     const std::string& prefix) {
  Vec h = dense(obs, n, p, prefix + "/l0");
  tanh_inplace(h);
  return dense(h, n, p, prefix + "/l1");
}

inline Vec layernorm_rows(const Vec& x, int n, int f, const Params& p,
                          const std::string& prefix, double eps = 1e-5) {
  const Vec& gain = p.vec(prefix + "/gain");
  const Vec& bias = p.vec(prefix + "/bias");
  Vec y(x.size());
  for (int r = 0; r < n; ++r) {
    const double* src = x.data() + static_cast<size_t>(r) * f;
    double mu = 0.0;
    for (int j = 0; j < f; ++j) mu += src[j];
    mu /= f;
    double var = 0.0;
    for (int j = 0; j < f; ++j) var += (src[j] - mu) * (src[j] - mu);
    var /= f;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < f; ++j)
      y[static_cast<size_t>(r) * f + j] =
          (src[j] - mu) * inv * gain[static_cast<size_t>(j)] +
          bias[static_cast<size_t>(j)];
  }
  return y;
}

// x[n, a] * W[a, b] with no bias.
inline Vec matmul(const Vec& x, int n, const Vec& W, int a, int b) {
  Vec y(static_cast<size_t>(n) * b, 0.0);
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < a; ++k) {
      const double xv = x[static_cast<size_t>(r) * a + k];
      for (int j = 0; j < b; ++j)
        y[static_cast<size_t>(r) * b + j] += xv * W[static_cast<size_t>(k) * b + j];
    }
  return y;
}

struct GaussRef {
  Vec mean, log_std;  // [B, latent]
};

// Sequence encoder forward: pre-norm transformer with key masking, mean
// pooling over real steps, clamped heads.
inline GaussRef encoder_forward(const Params& p, const LmpSizes& sz,
                                const Vec& steps, const Vec& mask, int B) {
  const int T = kWindowLen;
  const int W = sz.enc_width;
  const int H = sz.enc_heads;
  const int dh = W / H;
  const int n = B * T;

  Vec x = dense(steps, n, p, "enc/in_proj");
  const Vec& pos = p.vec("enc/pos");
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < W; ++j)
        x[(static_cast<size_t>(b) * T + t) * W + j] +=
            pos[static_cast<size_t>(t) * W + j];

  for (int blk = 0; blk < sz.enc_blocks; ++blk) {
    const std::string bp = "enc/b" + std::to_string(blk);
    Vec h = layernorm_rows(x, n, W, p, bp + "/ln1");
    Vec q = matmul(h, n, p.vec(bp + "/attn/Wq"), W, W);
    Vec k = matmul(h, n, p.vec(bp + "/attn/Wk"), W, W);
    Vec v = matmul(h, n, p.vec(bp + "/attn/Wv"), W, W);

    Vec ctx(static_cast<size_t>(n) * W, 0.0);
    for (int b = 0; b < B; ++b) {
      for (int hd = 0; hd < H; ++hd) {
        const int off = hd * dh;
        for (int i = 0; i < T; ++i) {
          // Scores against every key; padded keys pushed to -1e30.
          Vec sc(static_cast<size_t>(T));
          for (int j = 0; j < T; ++j) {
            double acc = 0.0;
            for (int d = 0; d < dh; ++d)
              acc += q[(static_cast<size_t>(b) * T + i) * W + off + d] *
                     k[(static_cast<size_t>(b) * T + j) * W + off + d];
            sc[static_cast<size_t>(j)] =
                acc / std::sqrt(static_cast<double>(dh)) +
                (mask[static_cast<size_t>(b) * T + j] <= 0.0 ? -1e30 : 0.0);
          }
          double mx = sc[0];
          for (double s : sc) mx = std::max(mx, s);
          double z = 0.0;
          for (double& s : sc) {
            s = std::exp(s - mx);
            z += s;
          }
          for (int j = 0; j < T; ++j)
            for (int d = 0; d < dh; ++d)
              ctx[(static_cast<size_t>(b) * T + i) * W + off + d] +=
                  sc[static_cast<size_t>(j)] / z *
                  v[(static_cast<size_t>(b) * T + j) * W + off + d];
        }
      }
    }
    Vec attn_out = matmul(ctx, n, p.vec(bp + "/attn/Wo"), W, W);
    for (size_t i = 0; i < x.size(); ++i) x[i] += attn_out[i];

    Vec f = layernorm_rows(x, n, W, p, bp + "/ln2");
    Vec f1 = dense(f, n, p, bp + "/ff1");
    relu_inplace(f1);
    Vec f2 = dense(f1, n, p, bp + "/ff2");
    for (size_t i = 0; i < x.size(); ++i) x[i] += f2[i];
  }

  Vec y = layernorm_rows(x, n, W, p, "enc/ln_f");
  Vec pooled(static_cast<size_t>(B) * W, 0.0);
  for (int b = 0; b < B; ++b) {
    double len = 0.0;
    for (int t = 0; t < T; ++t) len += mask[static_cast<size_t>(b) * T + t];
    for (int t = 0; t < T; ++t) {
      const double m = mask[static_cast<size_t>(b) * T + t];
      if (m <= 0.0) continue;
      for (int j = 0; j < W; ++j)
        pooled[static_cast<size_t>(b) * W + j] +=
            m * y[(static_cast<size_t>(b) * T + t) * W + j];
    }
    for (int j = 0; j < W; ++j)
      pooled[static_cast<size_t>(b) * W + j] *= 1.0 / len;
  }

  GaussRef g;
  g.mean = dense(pooled, B, p, "enc/mean");
  g.log_std = dense(pooled, B, p, "enc/log_std");
  for (double& v2 : g.log_std)
    v2 = std::min(std::max(v2, sz.log_std_min), sz.log_std_max);
  return g;
}

// Goal-conditioned prior / actor trunk forward.
inline GaussRef prior_forward(const Params& p, const LmpSizes& sz,
                              const std::string& prefix, const Vec& s_now,
                              const Vec& s_goal, int B) {
  Vec e0 = embed_obs(s_now, B, p, prefix + "/emb");
  Vec e1 = embed_obs(s_goal, B, p, prefix + "/emb");
  Vec cat(static_cast<size_t>(B) * 2 * sz.obs_embed);
  for (int b = 0; b < B; ++b) {
    std::copy(e0.begin() + static_cast<long>(b) * sz.obs_embed,
              e0.begin() + static_cast<long>(b + 1) * sz.obs_embed,
              cat.begin() + static_cast<long>(b) * 2 * sz.obs_embed);
    std::copy(e1.begin() + static_cast<long>(b) * sz.obs_embed,
              e1.begin() + static_cast<long>(b + 1) * sz.obs_embed,
              cat.begin() + static_cast<long>(b) * 2 * sz.obs_embed +
                  sz.obs_embed);
  }
  Vec h = dense(cat, B, p, prefix + "/trunk/l0");
  tanh_inplace(h);
  h = dense(h, B, p, prefix + "/trunk/l1");
  tanh_inplace(h);
  h = dense(h, B, p, prefix + "/trunk/l2");
  tanh_inplace(h);

  GaussRef g;
  g.mean = dense(h, B, p, prefix + "/mean");
  g.log_std = dense(h, B, p, prefix + "/log_std");
  for (double& v : g.log_std)
    v = std::min(std::max(v, sz.log_std_min), sz.log_std_max);
  return g;
}

inline Vec gru_step(const Params& p, const std::string& prefix, const Vec& x,
                    int B, int in, int hidden, Vec& h) {
  auto gate = [&](const char* w, const char* u, const char* bias,
                  const Vec& hin) {
    Vec g = matmul(x, B, p.vec(prefix + "/" + w), in, hidden);
    Vec hu = matmul(hin, B, p.vec(prefix + "/" + u), hidden, hidden);
    const Vec& bb = p.vec(prefix + "/" + bias);
    for (int r = 0; r < B; ++r)
      for (int j = 0; j < hidden; ++j)
        g[static_cast<size_t>(r) * hidden + j] +=
            hu[static_cast<size_t>(r) * hidden + j] + bb[static_cast<size_t>(j)];
    return g;
  };
  Vec u = gate("Wu", "Uu", "bu", h);
  for (double& v : u) v = sigmoid(v);
  Vec r = gate("Wr", "Ur", "br", h);
  for (double& v : r) v = sigmoid(v);
  Vec rh(h.size());
  for (size_t i = 0; i < h.size(); ++i) rh[i] = r[i] * h[i];
  Vec c = gate("Wc", "Uc", "bc", rh);
  tanh_inplace(c);
  Vec out(h.size());
  for (size_t i = 0; i < h.size(); ++i)
    out[i] = (1.0 - u[i]) * h[i] + u[i] * c[i];
  h = out;
  return out;
}

// Discretized logistic mixture NLL of one scalar, tails absorbed.
inline double mixture_nll(const double* logits, const double* means,
                          const double* log_scales, double target,
                          const MixtureSpec& spec) {
  const int C = spec.components;
  if (target < spec.lo) target = spec.lo;
  if (target > spec.hi) target = spec.hi;
  const double bin_w = (spec.hi - spec.lo) / spec.bins;
  int bin = static_cast<int>(std::floor((target - spec.lo) / bin_w));
  if (bin < 0) bin = 0;
  if (bin >= spec.bins) bin = spec.bins - 1;
  double mx = logits[0];
  for (int i = 1; i < C; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (int i = 0; i < C; ++i) z += std::exp(logits[i] - mx);
  double prob = 0.0;
  for (int i = 0; i < C; ++i) {
    const double w = std::exp(logits[i] - mx) / z;
    const double s = std::exp(std::max(log_scales[i], spec.log_scale_min));
    const double lo_cdf =
        bin == 0 ? 0.0 : sigmoid((spec.lo + bin * bin_w - means[i]) / s);
    const double hi_cdf =
        bin == spec.bins - 1
            ? 1.0
            : sigmoid((spec.lo + (bin + 1) * bin_w - means[i]) / s);
    prob += w * (hi_cdf - lo_cdf);
  }
  return -std::log(std::max(prob, 1e-12));
}

// KL(q || p) per row, diagonal Gaussians in mean/log-std form.
inline Vec kl_rows(const GaussRef& q, const GaussRef& p, int B, int K) {
  Vec out(static_cast<size_t>(B), 0.0);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k) {
      const size_t i = static_cast<size_t>(b) * K + k;
      const double lq = q.log_std[i], lp = p.log_std[i];
      const double d = q.mean[i] - p.mean[i];
      out[static_cast<size_t>(b)] +=
          lp - lq + 0.5 * (std::exp(2.0 * lq) + d * d) * std::exp(-2.0 * lp) -
          0.5;
    }
  return out;
}

struct LmpLossRef {
  double nll_mean = 0.0;
  double kl_mean = 0.0;
  double loss = 0.0;
};

// Recomputes the training loss for one window batch given the plans that
// were actually sampled. The balanced KL's value equals the plain KL.
inline LmpLossRef lmp_loss_reference(const Params& p, const LmpSizes& sz,
                                     const WindowBatch& batch,
                                     const Vec& z_pre, double beta) {
  const int B = batch.batch;
  const int T = kWindowLen;

  const GaussRef q = encoder_forward(p, sz, batch.enc_steps.value(),
                                     batch.mask_flat, B);
  const GaussRef pr = prior_forward(p, sz, "prior", batch.s_start.value(),
                                    batch.s_goal.value(), B);

  // The decoder consumes the squashed plan; the KL below acts pre-squash.
  Vec z = z_pre;
  tanh_inplace(z);

  // Decoder rollout.
  const int in_dim = sz.obs_embed + sz.latent;
  std::vector<Vec> h(static_cast<size_t>(sz.dec_layers),
                     Vec(static_cast<size_t>(B) * sz.dec_hidden, 0.0));
  Vec nll(static_cast<size_t>(B), 0.0);
  for (int t = 0; t < T; ++t) {
    Vec e = embed_obs(batch.obs_steps[static_cast<size_t>(t)].value(), B, p,
                      "dec/emb");
    Vec x(static_cast<size_t>(B) * in_dim);
    for (int b = 0; b < B; ++b) {
      std::copy(e.begin() + static_cast<long>(b) * sz.obs_embed,
                e.begin() + static_cast<long>(b + 1) * sz.obs_embed,
                x.begin() + static_cast<long>(b) * in_dim);
      std::copy(z.begin() + static_cast<long>(b) * sz.latent,
                z.begin() + static_cast<long>(b + 1) * sz.latent,
                x.begin() + static_cast<long>(b) * in_dim + sz.obs_embed);
    }
    Vec layer_in = x;
    int cur_in = in_dim;
    Vec top;
    for (int l = 0; l < sz.dec_layers; ++l) {
      top = gru_step(p, "dec/gru" + std::to_string(l), layer_in, B, cur_in,
                     sz.dec_hidden, h[static_cast<size_t>(l)]);
      layer_in = top;
      cur_in = sz.dec_hidden;
    }
    Vec out = dense(top, B, p, "dec/head");
    for (int b = 0; b < B; ++b) {
      const double m = batch.mask[static_cast<size_t>(t)][static_cast<size_t>(b)];
      if (m <= 0.0) continue;
      const double* row = out.data() + static_cast<size_t>(b) * kDecHeadCols;
      double step_nll =
          mixture_nll(row, row + 10, row + 20,
                      batch.ax[static_cast<size_t>(t)][static_cast<size_t>(b)],
                      sz.mixture) +
          mixture_nll(row + 30, row + 40, row + 50,
                      batch.ay[static_cast<size_t>(t)][static_cast<size_t>(b)],
                      sz.mixture);
      const double logit = row[kGripperCol];
      step_nll +=
          softplus(logit) -
          logit * batch.g01[static_cast<size_t>(t)][static_cast<size_t>(b)];
      nll[static_cast<size_t>(b)] += m * step_nll;
    }
  }

  const Vec kl = kl_rows(q, pr, B, sz.latent);
  LmpLossRef res;
  for (int b = 0; b < B; ++b) {
    res.nll_mean += nll[static_cast<size_t>(b)];
    res.kl_mean += kl[static_cast<size_t>(b)];
  }
  res.nll_mean /= B;
  res.kl_mean /= B;
  res.loss = res.nll_mean + beta * res.kl_mean;
  return res;
}

// ---------------------------------------------------------------------------
// Conservative Q-learning recomputation
// ---------------------------------------------------------------------------

// Critic value per row: relu trunk over embed(s) ++ embed(s_g) ++ a, scalar
// head.
inline Vec critic_forward(const Params& p, const std::string& prefix,
                          const Vec& s, const Vec& a, const Vec& s_g, int B,
                          int act_dim, int emb_dim) {
  Vec es = embed_obs(s, B, p, prefix + "/emb");
  Vec eg = embed_obs(s_g, B, p, prefix + "/emb");
  const int in = 2 * emb_dim + act_dim;
  Vec x(static_cast<size_t>(B) * in);
  for (int b = 0; b < B; ++b) {
    double* row = x.data() + static_cast<size_t>(b) * in;
    std::copy(es.begin() + static_cast<long>(b) * emb_dim,
              es.begin() + static_cast<long>(b + 1) * emb_dim, row);
    std::copy(eg.begin() + static_cast<long>(b) * emb_dim,
              eg.begin() + static_cast<long>(b + 1) * emb_dim, row + emb_dim);
    std::copy(a.begin() + static_cast<long>(b) * act_dim,
              a.begin() + static_cast<long>(b + 1) * act_dim,
              row + 2 * emb_dim);
  }
  Vec h = dense(x, B, p, prefix + "/trunk/l0");
  relu_inplace(h);
  h = dense(h, B, p, prefix + "/trunk/l1");
  relu_inplace(h);
  h = dense(h, B, p, prefix + "/trunk/l2");
  relu_inplace(h);
  return dense(h, B, p, prefix + "/head");
}

struct CqlRef {
  Vec y;  // backup values
  double loss = 0.0;
  double mse1 = 0.0, mse2 = 0.0;
  double gap1 = 0.0, gap2 = 0.0;
};

// Replays bellman_targets followed by cql_critic_loss from captured
// parameters and a clone of the generator handed to the originals. Draws,
// in order: one eps block [B,L] (backup plans), ood uniform blocks [B,L],
// ood eps blocks [B,L] (pessimism plans, with log-density correction).
inline CqlRef cql_reference(const Params& p, const LmpSizes& sz,
                            const Vec& s, const Vec& z_data, const Vec& s_g,
                            const Vec& s_next, const Vec& r, int B,
                            double gamma, double cql_alpha, int ood,
                            Rng& rng) {
  const int L = sz.latent;
  const int E = sz.obs_embed;
  auto sample_rows = [&](const GaussRef& d, Vec* logpi) {
    Vec z(static_cast<size_t>(B) * L);
    if (logpi) logpi->assign(static_cast<size_t>(B), 0.0);
    for (int b = 0; b < B; ++b)
      for (int l = 0; l < L; ++l) {
        const size_t i = static_cast<size_t>(b) * L + l;
        const double eps = rng.normal();
        z[i] = d.mean[i] + std::exp(d.log_std[i]) * eps;
        if (logpi)
          (*logpi)[static_cast<size_t>(b)] +=
              -0.5 * eps * eps - d.log_std[i] - 0.5 * kLogTwoPi -
              2.0 * (kLogTwo - z[i] - softplus(-2.0 * z[i]));
      }
    return z;
  };

  CqlRef out;

  // Backup.
  GaussRef next_dist = prior_forward(p, sz, "actor", s_next, s_g, B);
  Vec zb = sample_rows(next_dist, nullptr);
  tanh_inplace(zb);
  Vec t1 = critic_forward(p, "t1", s_next, zb, s_g, B, L, E);
  Vec t2 = critic_forward(p, "t2", s_next, zb, s_g, B, L, E);
  out.y.resize(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    const size_t i = static_cast<size_t>(b);
    out.y[i] = r[i] == 1.0 ? 1.0 : gamma * std::min(t1[i], t2[i]);
  }

  // Pessimism plan set: uniform, actor, dataset.
  std::vector<Vec> plans;
  std::vector<Vec> shift(static_cast<size_t>(2 * ood + 1),
                         Vec(static_cast<size_t>(B), 0.0));
  for (int v = 0; v < ood; ++v) {
    Vec u(static_cast<size_t>(B) * L);
    for (double& x : u) x = rng.uniform(-1.0, 1.0);
    plans.push_back(std::move(u));
    shift[static_cast<size_t>(v)].assign(static_cast<size_t>(B),
                                         L * kLogTwo);
  }
  GaussRef cur_dist = prior_forward(p, sz, "actor", s, s_g, B);
  for (int v = 0; v < ood; ++v) {
    Vec logpi;
    Vec z = sample_rows(cur_dist, &logpi);
    tanh_inplace(z);
    plans.push_back(std::move(z));
    for (int b = 0; b < B; ++b)
      shift[static_cast<size_t>(ood + v)][static_cast<size_t>(b)] =
          -logpi[static_cast<size_t>(b)];
  }
  plans.push_back(z_data);

  for (int c = 0; c < 2; ++c) {
    const std::string prefix = c == 0 ? "q1" : "q2";
    Vec q_data = critic_forward(p, prefix, s, z_data, s_g, B, L, E);
    double mse = 0.0;
    for (int b = 0; b < B; ++b) {
      const double d = q_data[static_cast<size_t>(b)] -
                       out.y[static_cast<size_t>(b)];
      mse += d * d;
    }
    mse /= B;

    std::vector<Vec> cols;
    for (size_t v = 0; v < plans.size(); ++v) {
      Vec qc = critic_forward(p, prefix, s, plans[v], s_g, B, L, E);
      for (int b = 0; b < B; ++b)
        qc[static_cast<size_t>(b)] += shift[v][static_cast<size_t>(b)];
      cols.push_back(std::move(qc));
    }
    double lse_mean = 0.0, data_mean = 0.0;
    for (int b = 0; b < B; ++b) {
      double mx = cols[0][static_cast<size_t>(b)];
      for (const Vec& col : cols)
        mx = std::max(mx, col[static_cast<size_t>(b)]);
      double acc = 0.0;
      for (const Vec& col : cols)
        acc += std::exp(col[static_cast<size_t>(b)] - mx);
      lse_mean += mx + std::log(acc);
      data_mean += q_data[static_cast<size_t>(b)];
    }
    lse_mean /= B;
    data_mean /= B;
    const double gap = lse_mean - data_mean;
    (c == 0 ? out.mse1 : out.mse2) = mse;
    (c == 0 ? out.gap1 : out.gap2) = gap;
    out.loss += mse + cql_alpha * gap;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flat actor + conservative loss over primitive actions
// ---------------------------------------------------------------------------

struct FlatActorRef {
  Vec mean;     // [B, 2]
  Vec log_std;  // [B, 2]
  Vec grip_a;   // [B] logit(closed) - logit(open)
};

inline FlatActorRef flat_actor_forward(const Params& p, const LmpSizes& sz,
                                       const Vec& s_now, const Vec& s_goal,
                                       int B) {
  Vec e0 = embed_obs(s_now, B, p, "actor/emb");
  Vec e1 = embed_obs(s_goal, B, p, "actor/emb");
  Vec cat(static_cast<size_t>(B) * 2 * sz.obs_embed);
  for (int b = 0; b < B; ++b) {
    std::copy(e0.begin() + static_cast<long>(b) * sz.obs_embed,
              e0.begin() + static_cast<long>(b + 1) * sz.obs_embed,
              cat.begin() + static_cast<long>(b) * 2 * sz.obs_embed);
    std::copy(e1.begin() + static_cast<long>(b) * sz.obs_embed,
              e1.begin() + static_cast<long>(b + 1) * sz.obs_embed,
              cat.begin() + static_cast<long>(b) * 2 * sz.obs_embed +
                  sz.obs_embed);
  }
  Vec h = dense(cat, B, p, "actor/trunk/l0");
  tanh_inplace(h);
  h = dense(h, B, p, "actor/trunk/l1");
  tanh_inplace(h);
  h = dense(h, B, p, "actor/trunk/l2");
  tanh_inplace(h);

  FlatActorRef out;
  out.mean = dense(h, B, p, "actor/mean");
  out.log_std = dense(h, B, p, "actor/log_std");
  for (double& v : out.log_std)
    v = std::min(std::max(v, sz.log_std_min), sz.log_std_max);
  Vec grip = dense(h, B, p, "actor/grip");
  out.grip_a.resize(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b)
    out.grip_a[static_cast<size_t>(b)] =
        grip[static_cast<size_t>(b) * 2 + 1] -
        grip[static_cast<size_t>(b) * 2 + 0];
  return out;
}

// Replays flat_bellman_targets followed by flat_cql_critic_loss. Draws per
// actor block: eps pairs [B,2] row-major, then one logistic noise per row;
// uniform blocks are [B,3] row-major.
inline CqlRef flat_cql_reference(const Params& p, const LmpSizes& sz,
                                 const Vec& s, const Vec& a_data,
                                 const Vec& s_g, const Vec& s_next,
                                 const Vec& r, int B, double gamma,
                                 double cql_alpha, int ood, double temp,
                                 Rng& rng) {
  const int A = 3;
  const int E = sz.obs_embed;
  auto sample_rows = [&](const FlatActorRef& d, Vec* logpi) {
    Vec a(static_cast<size_t>(B) * A);
    if (logpi) logpi->assign(static_cast<size_t>(B), 0.0);
    for (int b = 0; b < B; ++b)
      for (int x = 0; x < 2; ++x) {
        const size_t i = static_cast<size_t>(b) * 2 + x;
        const double eps = rng.normal();
        const double pre = d.mean[i] + std::exp(d.log_std[i]) * eps;
        a[static_cast<size_t>(b) * A + x] = std::tanh(pre);
        if (logpi)
          (*logpi)[static_cast<size_t>(b)] +=
              -0.5 * eps * eps - d.log_std[i] - 0.5 * kLogTwoPi -
              2.0 * (kLogTwo - pre - softplus(-2.0 * pre));
      }
    for (int b = 0; b < B; ++b) {
      const double u = rng.uniform01();
      const double l = std::log(u) - std::log1p(-u);
      const double ga = d.grip_a[static_cast<size_t>(b)];
      const double t = (ga + l) / temp;
      a[static_cast<size_t>(b) * A + 2] = std::tanh(0.5 * t);
      if (logpi)
        (*logpi)[static_cast<size_t>(b)] += std::log(temp) - l -
                                            2.0 * softplus(-l) + softplus(t) +
                                            softplus(-t) - kLogTwo;
    }
    return a;
  };

  CqlRef out;

  FlatActorRef next_dist = flat_actor_forward(p, sz, s_next, s_g, B);
  Vec ab = sample_rows(next_dist, nullptr);
  Vec t1 = critic_forward(p, "t1", s_next, ab, s_g, B, A, E);
  Vec t2 = critic_forward(p, "t2", s_next, ab, s_g, B, A, E);
  out.y.resize(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    const size_t i = static_cast<size_t>(b);
    out.y[i] = r[i] == 1.0 ? 1.0 : gamma * std::min(t1[i], t2[i]);
  }

  std::vector<Vec> actions;
  std::vector<Vec> shift(static_cast<size_t>(2 * ood + 1),
                         Vec(static_cast<size_t>(B), 0.0));
  for (int v = 0; v < ood; ++v) {
    Vec u(static_cast<size_t>(B) * A);
    for (double& x : u) x = rng.uniform(-1.0, 1.0);
    actions.push_back(std::move(u));
    shift[static_cast<size_t>(v)].assign(static_cast<size_t>(B),
                                         A * kLogTwo);
  }
  FlatActorRef cur_dist = flat_actor_forward(p, sz, s, s_g, B);
  for (int v = 0; v < ood; ++v) {
    Vec logpi;
    Vec a = sample_rows(cur_dist, &logpi);
    actions.push_back(std::move(a));
    for (int b = 0; b < B; ++b)
      shift[static_cast<size_t>(ood + v)][static_cast<size_t>(b)] =
          -logpi[static_cast<size_t>(b)];
  }
  actions.push_back(a_data);

  for (int c = 0; c < 2; ++c) {
    const std::string prefix = c == 0 ? "q1" : "q2";
    Vec q_data = critic_forward(p, prefix, s, a_data, s_g, B, A, E);
    double mse = 0.0;
    for (int b = 0; b < B; ++b) {
      const double d = q_data[static_cast<size_t>(b)] -
                       out.y[static_cast<size_t>(b)];
      mse += d * d;
    }
    mse /= B;

    std::vector<Vec> cols;
    for (size_t v = 0; v < actions.size(); ++v) {
      Vec qc = critic_forward(p, prefix, s, actions[v], s_g, B, A, E);
      for (int b = 0; b < B; ++b)
        qc[static_cast<size_t>(b)] += shift[v][static_cast<size_t>(b)];
      cols.push_back(std::move(qc));
    }
    double lse_mean = 0.0, data_mean = 0.0;
    for (int b = 0; b < B; ++b) {
      double mx = cols[0][static_cast<size_t>(b)];
      for (const Vec& col : cols)
        mx = std::max(mx, col[static_cast<size_t>(b)]);
      double acc = 0.0;
      for (const Vec& col : cols)
        acc += std::exp(col[static_cast<size_t>(b)] - mx);
      lse_mean += mx + std::log(acc);
      data_mean += q_data[static_cast<size_t>(b)];
    }
    lse_mean /= B;
    data_mean /= B;
    const double gap = lse_mean - data_mean;
    (c == 0 ? out.mse1 : out.mse2) = mse;
    (c == 0 ? out.gap1 : out.gap2) = gap;
    out.loss += mse + cql_alpha * gap;
  }
  return out;
}

}  // namespace ref
}  // namespace taco
