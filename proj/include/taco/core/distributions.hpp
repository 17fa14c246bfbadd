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

#include <cmath>
#include <vector>

#include "taco/core/rng.hpp"
#include "taco/core/tensor.hpp"

namespace taco {

constexpr double kLogTwoPi = 1.8378770664093453;  // log(2*pi)
constexpr double kLogTwo = 0.6931471805599453;

// Diagonal Gaussian expressed as mean and log standard deviation, [N,K].
struct GaussHead {
  Tensor mean;
  Tensor log_std;

  GaussHead detached() const { return {detach(mean), detach(log_std)}; }
  int batch() const { return mean.dim(0); }
  int dims() const { return mean.dim(1); }
};

// KL(q || p) per row, summed over dims:
//   sum_k [ lp - lq + (exp(2 lq) + (mq - mp)^2) / (2 exp(2 lp)) - 1/2 ]
inline Tensor kl_diag(const GaussHead& q, const GaussHead& p) {
  Tensor diff = sub(q.mean, p.mean);
  Tensor var_q = exp_t(mul_scalar(q.log_std, 2.0));
  Tensor inv_var_p = exp_t(mul_scalar(p.log_std, -2.0));
  Tensor quad = mul_scalar(mul(add(var_q, square_t(diff)), inv_var_p), 0.5);
  Tensor per_dim =
      add_scalar(add(sub(p.log_std, q.log_std), quad), -0.5);
  return sum_lastdim(per_dim);
}

// Two-sided KL with a stop-gradient on each half:
//   alpha * KL(sg(q) || p) + (1 - alpha) * KL(q || sg(p))
// The value equals the plain KL; the gradient reaching p's parameters is
// scaled by alpha and the gradient reaching q's by (1 - alpha).
inline Tensor kl_balanced(const GaussHead& q, const GaussHead& p,
                          double alpha) {
  Tensor lhs = mul_scalar(kl_diag(q.detached(), p), alpha);
  Tensor rhs = mul_scalar(kl_diag(q, p.detached()), 1.0 - alpha);
  return add(lhs, rhs);
}

// Reparameterized pre-squash sample: z = mean + exp(log_std) * eps with eps
// drawn here and entering the graph as a constant.
inline Tensor reparam_sample(const GaussHead& g, Rng& rng) {
  std::vector<double> eps(g.mean.size());
  for (double& e : eps) e = rng.normal();
  Tensor eps_t = Tensor::constant(g.mean.shape(), std::move(eps));
  return add(g.mean, mul(exp_t(g.log_std), eps_t));
}

// log N(x; mean, exp(log_std)) per row, summed over dims. `x` may be a graph
// tensor (reparameterized sample) or a constant.
inline Tensor gauss_logprob(const Tensor& x, const GaussHead& g) {
  Tensor u = mul(sub(x, g.mean), exp_t(neg(g.log_std)));
  Tensor per_dim = add_scalar(add(mul_scalar(square_t(u), 0.5), g.log_std),
                              0.5 * kLogTwoPi);
  return neg(sum_lastdim(per_dim));
}

// Summed log|d tanh(z)/dz| per row, the change-of-variables term for a
// tanh-squashed Gaussian, in the stable form 2*(log 2 - z - softplus(-2z)).
inline Tensor tanh_log_det(const Tensor& z_pre) {
  Tensor inner = sub(add_scalar(neg(z_pre), kLogTwo),
                     softplus_t(mul_scalar(z_pre, -2.0)));
  return mul_scalar(sum_lastdim(inner), 2.0);
}

// log-likelihood of a tanh-squashed sample given its pre-squash value.
inline Tensor tanh_gauss_logprob(const Tensor& z_pre, const GaussHead& g) {
  return sub(gauss_logprob(z_pre, g), tanh_log_det(z_pre));
}

// ---------------------------------------------------------------------------
// Plain-value samplers used at rollout time (no graph involvement)
// ---------------------------------------------------------------------------

// Per-bin probability mass of a discretized logistic mixture row.
inline std::vector<double> mixture_bin_masses(const double* logits,
                                              const double* means,
                                              const double* log_scales,
                                              const MixtureSpec& spec) {
  const int C = spec.components;
  std::vector<double> w(static_cast<size_t>(C));
  double mx = logits[0];
  for (int i = 1; i < C; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (int i = 0; i < C; ++i) {
    w[static_cast<size_t>(i)] = std::exp(logits[i] - mx);
    z += w[static_cast<size_t>(i)];
  }
  for (double& v : w) v /= z;
  const double bin_w = (spec.hi - spec.lo) / spec.bins;
  std::vector<double> mass(static_cast<size_t>(spec.bins), 0.0);
  for (int i = 0; i < C; ++i) {
    const double s = std::exp(std::max(log_scales[i], spec.log_scale_min));
    double prev = 0.0;  // absorbed left tail
    for (int b = 0; b < spec.bins; ++b) {
      double cdf_hi;
      if (b == spec.bins - 1) {
        cdf_hi = 1.0;  // absorbed right tail
      } else {
        const double xhi = spec.lo + (b + 1) * bin_w;
        cdf_hi = detail::sigmoid_scalar((xhi - means[i]) / s);
      }
      mass[static_cast<size_t>(b)] += w[static_cast<size_t>(i)] * (cdf_hi - prev);
      prev = cdf_hi;
    }
  }
  return mass;
}

inline double mixture_bin_center(int b, const MixtureSpec& spec) {
  const double bin_w = (spec.hi - spec.lo) / spec.bins;
  return spec.lo + (b + 0.5) * bin_w;
}

// Center of the highest-mass bin.
inline double mixture_greedy_value(const double* logits, const double* means,
                                   const double* log_scales,
                                   const MixtureSpec& spec) {
  const std::vector<double> mass =
      mixture_bin_masses(logits, means, log_scales, spec);
  int best = 0;
  for (int b = 1; b < spec.bins; ++b)
    if (mass[static_cast<size_t>(b)] > mass[static_cast<size_t>(best)]) best = b;
  return mixture_bin_center(best, spec);
}

// Component choice by weight, then a logistic draw, clamped to the support.
inline double mixture_sample_value(const double* logits, const double* means,
                                   const double* log_scales,
                                   const MixtureSpec& spec, Rng& rng) {
  const int C = spec.components;
  double mx = logits[0];
  for (int i = 1; i < C; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  std::vector<double> w(static_cast<size_t>(C));
  for (int i = 0; i < C; ++i) {
    w[static_cast<size_t>(i)] = std::exp(logits[i] - mx);
    z += w[static_cast<size_t>(i)];
  }
  double u = rng.uniform01() * z;
  int comp = C - 1;
  for (int i = 0; i < C; ++i) {
    u -= w[static_cast<size_t>(i)];
    if (u <= 0.0) {
      comp = i;
      break;
    }
  }
  const double s = std::exp(std::max(log_scales[comp], spec.log_scale_min));
  const double v = rng.uniform01_open();
  double x = means[comp] + s * std::log(v / (1.0 - v + 1e-300));
  if (x < spec.lo) x = spec.lo;
  if (x > spec.hi) x = spec.hi;
  return x;
}

inline double gumbel_draw(Rng& rng) {
  return -std::log(-std::log(rng.uniform01_open()));
}

}  // namespace taco
