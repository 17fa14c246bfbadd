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
#include <string>
#include <vector>

#include "taco/core/adam.hpp"
#include "taco/core/rng.hpp"
#include "taco/core/tensor.hpp"

namespace taco {

inline Tensor xavier_uniform(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<double> w(static_cast<size_t>(fan_in) * fan_out);
  for (double& v : w) v = rng.uniform(-limit, limit);
  return Tensor::param({fan_in, fan_out}, std::move(w));
}

enum class Act { None, Tanh, Relu };

inline Tensor apply_act(const Tensor& x, Act a) {
  switch (a) {
    case Act::Tanh:
      return tanh_t(x);
    case Act::Relu:
      return relu_t(x);
    default:
      return x;
  }
}

struct Dense {
  Tensor W, b;

  Dense() = default;
  Dense(int in, int out, Rng& rng)
      : W(xavier_uniform(in, out, rng)),
        b(Tensor::zeros({out}, /*requires_grad=*/true)) {}

  Tensor operator()(const Tensor& x) const {
    return add_rowvec(matmul(x, W), b);
  }

  void collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + "/W", W});
    out.push_back({prefix + "/b", b});
  }
};

// Fully-connected stack; hidden layers share one activation, output linear.
struct Mlp {
  std::vector<Dense> layers;
  Act hidden_act = Act::Tanh;

  Mlp() = default;
  Mlp(const std::vector<int>& dims, Rng& rng, Act act = Act::Tanh)
      : hidden_act(act) {
    for (size_t i = 0; i + 1 < dims.size(); ++i)
      layers.emplace_back(dims[i], dims[i + 1], rng);
  }

  Tensor operator()(const Tensor& x) const {
    Tensor h = x;
    for (size_t i = 0; i < layers.size(); ++i) {
      h = layers[i](h);
      if (i + 1 < layers.size()) h = apply_act(h, hidden_act);
    }
    return h;
  }

  void collect(const std::string& prefix, ParamList& out) {
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + "/l" + std::to_string(i), out);
  }
};

struct LayerNormLayer {
  Tensor gain, bias;

  LayerNormLayer() = default;
  explicit LayerNormLayer(int width)
      : gain(Tensor::param({width}, std::vector<double>(
                                        static_cast<size_t>(width), 1.0))),
        bias(Tensor::zeros({width}, /*requires_grad=*/true)) {}

  Tensor operator()(const Tensor& x) const { return layernorm(x, gain, bias); }

  void collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + "/gain", gain});
    out.push_back({prefix + "/bias", bias});
  }
};

// Single GRU layer. Gates follow the standard reset/update formulation:
//   u = sigmoid(x Wu + h Uu + bu), r = sigmoid(x Wr + h Ur + br)
//   c = tanh(x Wc + (r*h) Uc + bc), h' = (1-u)*h + u*c
struct GruLayer {
  Tensor Wu, Uu, bu, Wr, Ur, br, Wc, Uc, bc;
  int hidden = 0;

  GruLayer() = default;
  GruLayer(int in, int h, Rng& rng)
      : Wu(xavier_uniform(in, h, rng)),
        Uu(xavier_uniform(h, h, rng)),
        bu(Tensor::zeros({h}, true)),
        Wr(xavier_uniform(in, h, rng)),
        Ur(xavier_uniform(h, h, rng)),
        br(Tensor::zeros({h}, true)),
        Wc(xavier_uniform(in, h, rng)),
        Uc(xavier_uniform(h, h, rng)),
        bc(Tensor::zeros({h}, true)),
        hidden(h) {}

  Tensor step(const Tensor& x, const Tensor& h) const {
    Tensor u = sigmoid_t(add_rowvec(add(matmul(x, Wu), matmul(h, Uu)), bu));
    Tensor r = sigmoid_t(add_rowvec(add(matmul(x, Wr), matmul(h, Ur)), br));
    Tensor c = tanh_t(add_rowvec(add(matmul(x, Wc), matmul(mul(r, h), Uc)), bc));
    Tensor keep = mul(sub(Tensor::constant(u.shape(),
                                           std::vector<double>(u.size(), 1.0)),
                          u),
                      h);
    return add(keep, mul(u, c));
  }

  void collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + "/Wu", Wu});
    out.push_back({prefix + "/Uu", Uu});
    out.push_back({prefix + "/bu", bu});
    out.push_back({prefix + "/Wr", Wr});
    out.push_back({prefix + "/Ur", Ur});
    out.push_back({prefix + "/br", br});
    out.push_back({prefix + "/Wc", Wc});
    out.push_back({prefix + "/Uc", Uc});
    out.push_back({prefix + "/bc", bc});
  }
};

struct GruStack {
  std::vector<GruLayer> layers;

  GruStack() = default;
  GruStack(int in, int hidden, int n_layers, Rng& rng) {
    for (int i = 0; i < n_layers; ++i)
      layers.emplace_back(i == 0 ? in : hidden, hidden, rng);
  }

  std::vector<Tensor> initial_state(int batch) const {
    std::vector<Tensor> h;
    h.reserve(layers.size());
    for (const GruLayer& l : layers)
      h.push_back(Tensor::zeros({batch, l.hidden}));
    return h;
  }

  // Advances all layers one step; returns the top layer output.
  Tensor step(const Tensor& x, std::vector<Tensor>& state) const {
    Tensor inp = x;
    for (size_t i = 0; i < layers.size(); ++i) {
      state[i] = layers[i].step(inp, state[i]);
      inp = state[i];
    }
    return inp;
  }

  void collect(const std::string& prefix, ParamList& out) {
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + "/gru" + std::to_string(i), out);
  }
};

// Position-by-position copy; lists must line up in order and element count.
inline void copy_params(ParamList& dst, const ParamList& src) {
  if (dst.size() != src.size())
    throw TensorError("copy_params: list sizes differ (" +
                      std::to_string(dst.size()) + " vs " +
                      std::to_string(src.size()) + ")");
  for (size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].tensor.size() != src[i].tensor.size())
      throw TensorError("copy_params: size mismatch at '" + dst[i].name + "'");
    dst[i].tensor.raw_value() = src[i].tensor.value();
  }
}

// Polyak averaging: dst <- (1 - tau) * dst + tau * src.
inline void soft_update(ParamList& dst, const ParamList& src, double tau) {
  if (dst.size() != src.size())
    throw TensorError("soft_update: list sizes differ");
  for (size_t i = 0; i < dst.size(); ++i) {
    std::vector<double>& d = dst[i].tensor.raw_value();
    const std::vector<double>& s = src[i].tensor.value();
    for (size_t j = 0; j < d.size(); ++j)
      d[j] = (1.0 - tau) * d[j] + tau * s[j];
  }
}

}  // namespace taco
