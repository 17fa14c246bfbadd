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

// Reverse-mode autodiff over dense float64 tensors of rank 1..3. Each op
// builds a node holding forward values plus a closure that scatters the
// node's gradient into its parents. Graphs are rebuilt every step; leaf
// nodes (parameters) persist across steps.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace taco {

using Shape = std::vector<int>;

class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

inline size_t numel(const Shape& s) {
  size_t n = 1;
  for (const int d : s) n *= static_cast<size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backprop;  // scatters this->grad into parents
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor constant(Shape shape, std::vector<double> values) {
    if (numel(shape) != values.size())
      throw TensorError("constant: " + shape_str(shape) + " needs " +
                        std::to_string(numel(shape)) + " values, got " +
                        std::to_string(values.size()));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    return Tensor(std::move(n));
  }

  static Tensor scalar(double v) { return constant({1}, {v}); }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode>();
    n->value.assign(numel(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor param(Shape shape, std::vector<double> values) {
    Tensor t = constant(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& raw_value() { return node_->value; }
  const std::vector<double>& grad() const {
    if (node_->grad.size() != node_->value.size())
      throw TensorError("grad: no gradient populated for this tensor");
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  double item() const {
    if (size() != 1)
      throw TensorError("item: tensor has shape " + shape_str(shape()));
    return node_->value[0];
  }

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline std::shared_ptr<TensorNode> make_node(Shape shape,
                                             std::vector<Tensor> parents) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value.assign(numel(n->shape), 0.0);
  bool rg = false;
  n->parents.reserve(parents.size());
  for (const Tensor& p : parents) {
    rg = rg || p.requires_grad();
    n->parents.push_back(p.node());
  }
  n->requires_grad = rg;
  return n;
}

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + ": shape mismatch " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline bool wants(const std::shared_ptr<TensorNode>& n) {
  return n->requires_grad && n->grad.size() == n->value.size();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  auto n = detail::make_node(a.shape(), {a, b});
  const auto* av = a.value().data();
  const auto* bv = b.value().data();
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + bv[i];
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    auto pb = n->parents[1];
    n->backprop = [self, pa, pb]() {
      const size_t m = self->grad.size();
      if (detail::wants(pa))
        for (size_t i = 0; i < m; ++i) pa->grad[i] += self->grad[i];
      if (detail::wants(pb))
        for (size_t i = 0; i < m; ++i) pb->grad[i] += self->grad[i];
    };
  }
  return Tensor(n);
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  auto n = detail::make_node(a.shape(), {a, b});
  const auto* av = a.value().data();
  const auto* bv = b.value().data();
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] - bv[i];
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    auto pb = n->parents[1];
    n->backprop = [self, pa, pb]() {
      const size_t m = self->grad.size();
      if (detail::wants(pa))
        for (size_t i = 0; i < m; ++i) pa->grad[i] += self->grad[i];
      if (detail::wants(pb))
        for (size_t i = 0; i < m; ++i) pb->grad[i] -= self->grad[i];
    };
  }
  return Tensor(n);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  auto n = detail::make_node(a.shape(), {a, b});
  const auto* av = a.value().data();
  const auto* bv = b.value().data();
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * bv[i];
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    auto pb = n->parents[1];
    n->backprop = [self, pa, pb]() {
      const size_t m = self->grad.size();
      if (detail::wants(pa))
        for (size_t i = 0; i < m; ++i)
          pa->grad[i] += self->grad[i] * pb->value[i];
      if (detail::wants(pb))
        for (size_t i = 0; i < m; ++i)
          pb->grad[i] += self->grad[i] * pa->value[i];
    };
  }
  return Tensor(n);
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "div");
  auto n = detail::make_node(a.shape(), {a, b});
  const auto* av = a.value().data();
  const auto* bv = b.value().data();
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] / bv[i];
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    auto pb = n->parents[1];
    n->backprop = [self, pa, pb]() {
      const size_t m = self->grad.size();
      if (detail::wants(pa))
        for (size_t i = 0; i < m; ++i)
          pa->grad[i] += self->grad[i] / pb->value[i];
      if (detail::wants(pb))
        for (size_t i = 0; i < m; ++i)
          pb->grad[i] -= self->grad[i] * pa->value[i] /
                         (pb->value[i] * pb->value[i]);
    };
  }
  return Tensor(n);
}

inline Tensor add_scalar(const Tensor& a, double c) {
  auto n = detail::make_node(a.shape(), {a});
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.value()[i] + c;
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    n->backprop = [self, pa]() {
      if (detail::wants(pa))
        for (size_t i = 0; i < self->grad.size(); ++i)
          pa->grad[i] += self->grad[i];
    };
  }
  return Tensor(n);
}

inline Tensor mul_scalar(const Tensor& a, double c) {
  auto n = detail::make_node(a.shape(), {a});
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.value()[i] * c;
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    n->backprop = [self, pa, c]() {
      if (detail::wants(pa))
        for (size_t i = 0; i < self->grad.size(); ++i)
          pa->grad[i] += self->grad[i] * c;
    };
  }
  return Tensor(n);
}

inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

// x * s where s is a 1-element tensor (e.g. a learned coefficient).
inline Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.size() != 1)
    throw TensorError("scale_by: scale must be 1-element, got " +
                      shape_str(s.shape()));
  auto n = detail::make_node(x.shape(), {x, s});
  const double sv = s.value()[0];
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = x.value()[i] * sv;
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto px = n->parents[0];
    auto ps = n->parents[1];
    n->backprop = [self, px, ps]() {
      const size_t m = self->grad.size();
      if (detail::wants(px)) {
        const double sv2 = ps->value[0];
        for (size_t i = 0; i < m; ++i) px->grad[i] += self->grad[i] * sv2;
      }
      if (detail::wants(ps)) {
        double acc = 0.0;
        for (size_t i = 0; i < m; ++i) acc += self->grad[i] * px->value[i];
        ps->grad[0] += acc;
      }
    };
  }
  return Tensor(n);
}

// [N,F] + [F], broadcast over rows. The usual bias add.
inline Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 1 || a.dim(1) != b.dim(0))
    throw TensorError("add_rowvec: " + shape_str(a.shape()) + " + " +
                      shape_str(b.shape()));
  auto n = detail::make_node(a.shape(), {a, b});
  const int N = a.dim(0), F = a.dim(1);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < F; ++j)
      n->value[static_cast<size_t>(i * F + j)] =
          a.value()[static_cast<size_t>(i * F + j)] +
          b.value()[static_cast<size_t>(j)];
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    auto pb = n->parents[1];
    n->backprop = [self, pa, pb, N, F]() {
      if (detail::wants(pa))
        for (size_t i = 0; i < self->grad.size(); ++i)
          pa->grad[i] += self->grad[i];
      if (detail::wants(pb))
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < F; ++j)
            pb->grad[static_cast<size_t>(j)] +=
                self->grad[static_cast<size_t>(i * F + j)];
    };
  }
  return Tensor(n);
}

// [B,T,E] + [T,E], broadcast over the leading dim (positional embeddings).
inline Tensor add_bcast0(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 2 || a.dim(1) != b.dim(0) ||
      a.dim(2) != b.dim(1))
    throw TensorError("add_bcast0: " + shape_str(a.shape()) + " + " +
                      shape_str(b.shape()));
  auto n = detail::make_node(a.shape(), {a, b});
  const int B = a.dim(0);
  const size_t plane = numel({a.dim(1), a.dim(2)});
  for (int ib = 0; ib < B; ++ib)
    for (size_t j = 0; j < plane; ++j)
      n->value[static_cast<size_t>(ib) * plane + j] =
          a.value()[static_cast<size_t>(ib) * plane + j] + b.value()[j];
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    auto pb = n->parents[1];
    n->backprop = [self, pa, pb, B, plane]() {
      if (detail::wants(pa))
        for (size_t i = 0; i < self->grad.size(); ++i)
          pa->grad[i] += self->grad[i];
      if (detail::wants(pb))
        for (int ib = 0; ib < B; ++ib)
          for (size_t j = 0; j < plane; ++j)
            pb->grad[j] += self->grad[static_cast<size_t>(ib) * plane + j];
    };
  }
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Unary maps
// ---------------------------------------------------------------------------

namespace detail {

// dval receives (x, y) and returns dy/dx.
template <typename F, typename DF>
Tensor unary_op(const Tensor& a, F fwd, DF dval, const char*) {
  auto n = make_node(a.shape(), {a});
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = fwd(a.value()[i]);
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    n->backprop = [self, pa, dval]() {
      if (!wants(pa)) return;
      for (size_t i = 0; i < self->grad.size(); ++i)
        pa->grad[i] += self->grad[i] * dval(pa->value[i], self->value[i]);
    };
  }
  return Tensor(n);
}

inline double sigmoid_scalar(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_scalar(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(-std::fabs(x))) + (x > 0 ? x : 0.0);
}

}  // namespace detail

inline Tensor tanh_t(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; }, "tanh");
}

inline Tensor sigmoid_t(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return detail::sigmoid_scalar(x); },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

inline Tensor exp_t(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; }, "exp");
}

inline Tensor log_t(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; }, "log");
}

inline Tensor softplus_t(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return detail::softplus_scalar(x); },
      [](double x, double) { return detail::sigmoid_scalar(x); }, "softplus");
}

inline Tensor relu_t(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; }, "relu");
}

inline Tensor square_t(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; }, "square");
}

// Pass-through gradient inside (lo, hi), zero outside.
inline Tensor clamp_t(const Tensor& a, double lo, double hi) {
  return detail::unary_op(
      a,
      [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; },
      "clamp");
}

// Elementwise min; ties route the gradient to the first argument.
inline Tensor min_elem(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "min_elem");
  auto n = detail::make_node(a.shape(), {a, b});
  for (size_t i = 0; i < n->value.size(); ++i)
    n->value[i] = a.value()[i] <= b.value()[i] ? a.value()[i] : b.value()[i];
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    auto pb = n->parents[1];
    n->backprop = [self, pa, pb]() {
      for (size_t i = 0; i < self->grad.size(); ++i) {
        if (pa->value[i] <= pb->value[i]) {
          if (detail::wants(pa)) pa->grad[i] += self->grad[i];
        } else if (detail::wants(pb)) {
          pb->grad[i] += self->grad[i];
        }
      }
    };
  }
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

namespace detail {

inline void mm_accum(const double* a, const double* b, double* c, int N, int K,
                     int M) {
  // c[N,M] += a[N,K] * b[K,M]; ikj order keeps both inner streams contiguous.
  for (int i = 0; i < N; ++i) {
    const double* arow = a + static_cast<size_t>(i) * K;
    double* crow = c + static_cast<size_t>(i) * M;
    for (int k = 0; k < K; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<size_t>(k) * M;
      for (int j = 0; j < M; ++j) crow[j] += av * brow[j];
    }
  }
}

inline void mm_accum_at(const double* a, const double* b, double* c, int N,
                        int K, int M) {
  // c[K,M] += a^T[K,N] * b[N,M] with a stored [N,K].
  for (int i = 0; i < N; ++i) {
    const double* arow = a + static_cast<size_t>(i) * K;
    const double* brow = b + static_cast<size_t>(i) * M;
    for (int k = 0; k < K; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      double* crow = c + static_cast<size_t>(k) * M;
      for (int j = 0; j < M; ++j) crow[j] += av * brow[j];
    }
  }
}

inline void mm_accum_bt(const double* a, const double* b, double* c, int N,
                        int M, int K) {
  // c[N,K] += a[N,M] * b^T[M,K] with b stored [K,M].
  for (int i = 0; i < N; ++i) {
    const double* arow = a + static_cast<size_t>(i) * M;
    double* crow = c + static_cast<size_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      const double* brow = b + static_cast<size_t>(k) * M;
      double acc = 0.0;
      for (int j = 0; j < M; ++j) acc += arow[j] * brow[j];
      crow[k] += acc;
    }
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw TensorError("matmul: " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  const int N = a.dim(0), K = a.dim(1), M = b.dim(1);
  auto n = detail::make_node({N, M}, {a, b});
  detail::mm_accum(a.value().data(), b.value().data(), n->value.data(), N, K,
                   M);
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    auto pb = n->parents[1];
    n->backprop = [self, pa, pb, N, K, M]() {
      if (detail::wants(pa))
        detail::mm_accum_bt(self->grad.data(), pb->value.data(),
                            pa->grad.data(), N, M, K);
      if (detail::wants(pb))
        detail::mm_accum_at(pa->value.data(), self->grad.data(),
                            pb->grad.data(), N, K, M);
    };
  }
  return Tensor(n);
}

inline Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(1))
    throw TensorError("bmm: " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  const int B = a.dim(0), N = a.dim(1), K = a.dim(2), M = b.dim(2);
  auto n = detail::make_node({B, N, M}, {a, b});
  for (int ib = 0; ib < B; ++ib)
    detail::mm_accum(a.value().data() + static_cast<size_t>(ib) * N * K,
                     b.value().data() + static_cast<size_t>(ib) * K * M,
                     n->value.data() + static_cast<size_t>(ib) * N * M, N, K,
                     M);
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    auto pb = n->parents[1];
    n->backprop = [self, pa, pb, B, N, K, M]() {
      for (int ib = 0; ib < B; ++ib) {
        const double* dc = self->grad.data() + static_cast<size_t>(ib) * N * M;
        if (detail::wants(pa))
          detail::mm_accum_bt(
              dc, pb->value.data() + static_cast<size_t>(ib) * K * M,
              pa->grad.data() + static_cast<size_t>(ib) * N * K, N, M, K);
        if (detail::wants(pb))
          detail::mm_accum_at(
              pa->value.data() + static_cast<size_t>(ib) * N * K, dc,
              pb->grad.data() + static_cast<size_t>(ib) * K * M, N, K, M);
      }
    };
  }
  return Tensor(n);
}

// Swap the last two dims of a rank-2 or rank-3 tensor.
inline Tensor transpose_last(const Tensor& a) {
  if (a.rank() != 2 && a.rank() != 3)
    throw TensorError("transpose_last: rank must be 2 or 3, got " +
                      shape_str(a.shape()));
  const int B = a.rank() == 3 ? a.dim(0) : 1;
  const int N = a.dim(a.rank() - 2), M = a.dim(a.rank() - 1);
  Shape out_shape = a.rank() == 3 ? Shape{B, M, N} : Shape{M, N};
  auto n = detail::make_node(out_shape, {a});
  for (int ib = 0; ib < B; ++ib) {
    const double* src = a.value().data() + static_cast<size_t>(ib) * N * M;
    double* dst = n->value.data() + static_cast<size_t>(ib) * N * M;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < M; ++j)
        dst[static_cast<size_t>(j) * N + i] = src[static_cast<size_t>(i) * M + j];
  }
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    n->backprop = [self, pa, B, N, M]() {
      if (!detail::wants(pa)) return;
      for (int ib = 0; ib < B; ++ib) {
        const double* dg = self->grad.data() + static_cast<size_t>(ib) * N * M;
        double* pg = pa->grad.data() + static_cast<size_t>(ib) * N * M;
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < M; ++j)
            pg[static_cast<size_t>(i) * M + j] +=
                dg[static_cast<size_t>(j) * N + i];
      }
    };
  }
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Reductions and row-structured ops
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
  auto n = detail::make_node({1}, {a});
  double acc = 0.0;
  for (const double v : a.value()) acc += v;
  n->value[0] = acc;
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    n->backprop = [self, pa]() {
      if (!detail::wants(pa)) return;
      const double g = self->grad[0];
      for (double& pg : pa->grad) pg += g;
    };
  }
  return Tensor(n);
}

inline Tensor mean_all(const Tensor& a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

// [..., F] -> [...]: sum over the last dim (rank 2 or 3).
inline Tensor sum_lastdim(const Tensor& a) {
  if (a.rank() != 2 && a.rank() != 3)
    throw TensorError("sum_lastdim: rank must be 2 or 3, got " +
                      shape_str(a.shape()));
  const int F = a.dim(a.rank() - 1);
  const int rows = static_cast<int>(a.size()) / F;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  auto n = detail::make_node(out_shape, {a});
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* src = a.value().data() + static_cast<size_t>(r) * F;
    for (int j = 0; j < F; ++j) acc += src[j];
    n->value[static_cast<size_t>(r)] = acc;
  }
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    n->backprop = [self, pa, rows, F]() {
      if (!detail::wants(pa)) return;
      for (int r = 0; r < rows; ++r) {
        const double g = self->grad[static_cast<size_t>(r)];
        double* pg = pa->grad.data() + static_cast<size_t>(r) * F;
        for (int j = 0; j < F; ++j) pg[j] += g;
      }
    };
  }
  return Tensor(n);
}

// Numerically stable softmax over the last dim (rank 2 or 3).
inline Tensor softmax_lastdim(const Tensor& a) {
  if (a.rank() != 2 && a.rank() != 3)
    throw TensorError("softmax_lastdim: rank must be 2 or 3, got " +
                      shape_str(a.shape()));
  const int F = a.dim(a.rank() - 1);
  const int rows = static_cast<int>(a.size()) / F;
  auto n = detail::make_node(a.shape(), {a});
  for (int r = 0; r < rows; ++r) {
    const double* src = a.value().data() + static_cast<size_t>(r) * F;
    double* dst = n->value.data() + static_cast<size_t>(r) * F;
    double mx = src[0];
    for (int j = 1; j < F; ++j) mx = std::max(mx, src[j]);
    double z = 0.0;
    for (int j = 0; j < F; ++j) {
      dst[j] = std::exp(src[j] - mx);
      z += dst[j];
    }
    const double inv = 1.0 / z;
    for (int j = 0; j < F; ++j) dst[j] *= inv;
  }
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    n->backprop = [self, pa, rows, F]() {
      if (!detail::wants(pa)) return;
      for (int r = 0; r < rows; ++r) {
        const double* y = self->value.data() + static_cast<size_t>(r) * F;
        const double* dy = self->grad.data() + static_cast<size_t>(r) * F;
        double* dx = pa->grad.data() + static_cast<size_t>(r) * F;
        double dot = 0.0;
        for (int j = 0; j < F; ++j) dot += dy[j] * y[j];
        for (int j = 0; j < F; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    };
  }
  return Tensor(n);
}

// [N,K] -> [N]: log(sum(exp(row))) with the max-shift trick.
inline Tensor logsumexp_lastdim(const Tensor& a) {
  if (a.rank() != 2)
    throw TensorError("logsumexp_lastdim: rank must be 2, got " +
                      shape_str(a.shape()));
  const int N = a.dim(0), K = a.dim(1);
  auto n = detail::make_node({N}, {a});
  for (int r = 0; r < N; ++r) {
    const double* src = a.value().data() + static_cast<size_t>(r) * K;
    double mx = src[0];
    for (int j = 1; j < K; ++j) mx = std::max(mx, src[j]);
    double z = 0.0;
    for (int j = 0; j < K; ++j) z += std::exp(src[j] - mx);
    n->value[static_cast<size_t>(r)] = mx + std::log(z);
  }
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    n->backprop = [self, pa, N, K]() {
      if (!detail::wants(pa)) return;
      for (int r = 0; r < N; ++r) {
        const double out = self->value[static_cast<size_t>(r)];
        const double g = self->grad[static_cast<size_t>(r)];
        const double* src = pa->value.data() + static_cast<size_t>(r) * K;
        double* pg = pa->grad.data() + static_cast<size_t>(r) * K;
        for (int j = 0; j < K; ++j) pg[j] += g * std::exp(src[j] - out);
      }
    };
  }
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Structure ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw TensorError("reshape: " + shape_str(a.shape()) + " -> " +
                      shape_str(shape) + " changes element count");
  auto n = detail::make_node(std::move(shape), {a});
  n->value = a.value();
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    n->backprop = [self, pa]() {
      if (!detail::wants(pa)) return;
      for (size_t i = 0; i < self->grad.size(); ++i)
        pa->grad[i] += self->grad[i];
    };
  }
  return Tensor(n);
}

inline Tensor concat_lastdim(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3))
    throw TensorError("concat_lastdim: " + shape_str(a.shape()) + " | " +
                      shape_str(b.shape()));
  for (int i = 0; i + 1 < a.rank(); ++i)
    if (a.dim(i) != b.dim(i))
      throw TensorError("concat_lastdim: " + shape_str(a.shape()) + " | " +
                        shape_str(b.shape()));
  const int Fa = a.dim(a.rank() - 1), Fb = b.dim(b.rank() - 1);
  const int rows = static_cast<int>(a.size()) / Fa;
  Shape out_shape = a.shape();
  out_shape.back() = Fa + Fb;
  auto n = detail::make_node(out_shape, {a, b});
  for (int r = 0; r < rows; ++r) {
    double* dst = n->value.data() + static_cast<size_t>(r) * (Fa + Fb);
    const double* sa = a.value().data() + static_cast<size_t>(r) * Fa;
    const double* sb = b.value().data() + static_cast<size_t>(r) * Fb;
    for (int j = 0; j < Fa; ++j) dst[j] = sa[j];
    for (int j = 0; j < Fb; ++j) dst[Fa + j] = sb[j];
  }
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    auto pb = n->parents[1];
    n->backprop = [self, pa, pb, rows, Fa, Fb]() {
      for (int r = 0; r < rows; ++r) {
        const double* dg = self->grad.data() + static_cast<size_t>(r) * (Fa + Fb);
        if (detail::wants(pa)) {
          double* pg = pa->grad.data() + static_cast<size_t>(r) * Fa;
          for (int j = 0; j < Fa; ++j) pg[j] += dg[j];
        }
        if (detail::wants(pb)) {
          double* pg = pb->grad.data() + static_cast<size_t>(r) * Fb;
          for (int j = 0; j < Fb; ++j) pg[j] += dg[Fa + j];
        }
      }
    };
  }
  return Tensor(n);
}

// Columns [from, to) of the last dim (rank 2 or 3).
inline Tensor slice_lastdim(const Tensor& a, int from, int to) {
  const int F = a.dim(a.rank() - 1);
  if ((a.rank() != 2 && a.rank() != 3) || from < 0 || to > F || from >= to)
    throw TensorError("slice_lastdim: [" + std::to_string(from) + "," +
                      std::to_string(to) + ") of " + shape_str(a.shape()));
  const int rows = static_cast<int>(a.size()) / F;
  const int W = to - from;
  Shape out_shape = a.shape();
  out_shape.back() = W;
  auto n = detail::make_node(out_shape, {a});
  for (int r = 0; r < rows; ++r) {
    const double* src = a.value().data() + static_cast<size_t>(r) * F + from;
    double* dst = n->value.data() + static_cast<size_t>(r) * W;
    for (int j = 0; j < W; ++j) dst[j] = src[j];
  }
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    n->backprop = [self, pa, rows, F, W, from]() {
      if (!detail::wants(pa)) return;
      for (int r = 0; r < rows; ++r) {
        const double* dg = self->grad.data() + static_cast<size_t>(r) * W;
        double* pg = pa->grad.data() + static_cast<size_t>(r) * F + from;
        for (int j = 0; j < W; ++j) pg[j] += dg[j];
      }
    };
  }
  return Tensor(n);
}

// Stops gradient flow; the result is a fresh constant leaf.
inline Tensor detach(const Tensor& a) {
  return Tensor::constant(a.shape(), a.value());
}

// ---------------------------------------------------------------------------
// Layer normalization over the last dim with affine gain/bias.
// ---------------------------------------------------------------------------

inline Tensor layernorm(const Tensor& x, const Tensor& gain,
                        const Tensor& bias, double eps = 1e-5) {
  if ((x.rank() != 2 && x.rank() != 3) || gain.rank() != 1 ||
      bias.rank() != 1 || gain.dim(0) != x.dim(x.rank() - 1) ||
      bias.dim(0) != x.dim(x.rank() - 1))
    throw TensorError("layernorm: x " + shape_str(x.shape()) + " gain " +
                      shape_str(gain.shape()) + " bias " +
                      shape_str(bias.shape()));
  const int F = x.dim(x.rank() - 1);
  const int rows = static_cast<int>(x.size()) / F;
  auto n = detail::make_node(x.shape(), {x, gain, bias});
  std::vector<double> inv_std(static_cast<size_t>(rows));
  std::vector<double> means(static_cast<size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const double* src = x.value().data() + static_cast<size_t>(r) * F;
    double mu = 0.0;
    for (int j = 0; j < F; ++j) mu += src[j];
    mu /= F;
    double var = 0.0;
    for (int j = 0; j < F; ++j) var += (src[j] - mu) * (src[j] - mu);
    var /= F;
    const double inv = 1.0 / std::sqrt(var + eps);
    means[static_cast<size_t>(r)] = mu;
    inv_std[static_cast<size_t>(r)] = inv;
    double* dst = n->value.data() + static_cast<size_t>(r) * F;
    for (int j = 0; j < F; ++j)
      dst[j] = (src[j] - mu) * inv * gain.value()[static_cast<size_t>(j)] +
               bias.value()[static_cast<size_t>(j)];
  }
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto px = n->parents[0];
    auto pg = n->parents[1];
    auto pb = n->parents[2];
    n->backprop = [self, px, pg, pb, rows, F, means, inv_std]() {
      for (int r = 0; r < rows; ++r) {
        const double mu = means[static_cast<size_t>(r)];
        const double inv = inv_std[static_cast<size_t>(r)];
        const double* xv = px->value.data() + static_cast<size_t>(r) * F;
        const double* dy = self->grad.data() + static_cast<size_t>(r) * F;
        if (detail::wants(pg) || detail::wants(pb)) {
          for (int j = 0; j < F; ++j) {
            const double xhat = (xv[j] - mu) * inv;
            if (detail::wants(pg))
              pg->grad[static_cast<size_t>(j)] += dy[j] * xhat;
            if (detail::wants(pb)) pb->grad[static_cast<size_t>(j)] += dy[j];
          }
        }
        if (detail::wants(px)) {
          // dxhat = dy * gain; dx via the standard two-correction form.
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int j = 0; j < F; ++j) {
            const double xhat = (xv[j] - mu) * inv;
            const double dxh = dy[j] * pg->value[static_cast<size_t>(j)];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xhat;
          }
          double* dx = px->grad.data() + static_cast<size_t>(r) * F;
          for (int j = 0; j < F; ++j) {
            const double xhat = (xv[j] - mu) * inv;
            const double dxh = dy[j] * pg->value[static_cast<size_t>(j)];
            dx[j] += inv * (dxh - sum_dxhat / F - xhat * sum_dxhat_xhat / F);
          }
        }
      }
    };
  }
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Fused likelihood ops
// ---------------------------------------------------------------------------

// Per-element binary cross-entropy from logits: softplus(x) - x*y, y in {0,1}.
inline Tensor bce_logits(const Tensor& logits, const std::vector<double>& y) {
  if (logits.size() != y.size())
    throw TensorError("bce_logits: " + std::to_string(logits.size()) +
                      " logits vs " + std::to_string(y.size()) + " targets");
  auto n = detail::make_node(logits.shape(), {logits});
  for (size_t i = 0; i < n->value.size(); ++i)
    n->value[i] =
        detail::softplus_scalar(logits.value()[i]) - logits.value()[i] * y[i];
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pa = n->parents[0];
    n->backprop = [self, pa, y]() {
      if (!detail::wants(pa)) return;
      for (size_t i = 0; i < self->grad.size(); ++i)
        pa->grad[i] +=
            self->grad[i] * (detail::sigmoid_scalar(pa->value[i]) - y[i]);
    };
  }
  return Tensor(n);
}

struct MixtureSpec {
  int components = 10;
  int bins = 256;
  double lo = -1.0;
  double hi = 1.0;
  double log_scale_min = -7.0;
};

namespace detail {

struct MixtureEdge {
  double u = 0.0;       // standardized edge (x - mean) / scale
  double cdf = 0.0;     // sigmoid(u), or the absorbed constant 0/1
  bool absorbed = false;  // tail-absorbing edge: constant, zero derivative
};

inline void mixture_row(const double* logits, const double* means,
                        const double* logscales, double x,
                        const MixtureSpec& spec, double* out_logprob,
                        double* w, MixtureEdge* lo_e, MixtureEdge* hi_e,
                        double* mass, double* scale, double* prob) {
  const int C = spec.components;
  const double bin_w = (spec.hi - spec.lo) / spec.bins;
  int b = static_cast<int>(std::floor((x - spec.lo) / bin_w));
  if (b < 0) b = 0;
  if (b >= spec.bins) b = spec.bins - 1;
  const double xlo = spec.lo + b * bin_w;
  const double xhi = xlo + bin_w;
  // Softmax over mixture logits.
  double mx = logits[0];
  for (int i = 1; i < C; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (int i = 0; i < C; ++i) {
    w[i] = std::exp(logits[i] - mx);
    z += w[i];
  }
  for (int i = 0; i < C; ++i) w[i] /= z;
  double p = 0.0;
  for (int i = 0; i < C; ++i) {
    const double ls = std::max(logscales[i], spec.log_scale_min);
    const double s = std::exp(ls);
    scale[i] = s;
    MixtureEdge lo_edge, hi_edge;
    if (b == 0) {
      lo_edge.absorbed = true;
      lo_edge.cdf = 0.0;
    } else {
      lo_edge.u = (xlo - means[i]) / s;
      lo_edge.cdf = sigmoid_scalar(lo_edge.u);
    }
    if (b == spec.bins - 1) {
      hi_edge.absorbed = true;
      hi_edge.cdf = 1.0;
    } else {
      hi_edge.u = (xhi - means[i]) / s;
      hi_edge.cdf = sigmoid_scalar(hi_edge.u);
    }
    lo_e[i] = lo_edge;
    hi_e[i] = hi_edge;
    mass[i] = hi_edge.cdf - lo_edge.cdf;
    p += w[i] * mass[i];
  }
  *prob = p;
  *out_logprob = std::log(std::max(p, 1e-12));
}

}  // namespace detail

// Log-likelihood of scalar actions under a discretized logistic mixture.
// Rows are independent: logits/means/log_scales are [N,C], actions has N
// entries in [lo, hi] (values outside are clamped; *clamp_count incremented).
// Tail bins absorb the full CDF mass so the bin masses sum to one exactly.
inline Tensor logistic_mixture_logprob(const Tensor& logits,
                                       const Tensor& means,
                                       const Tensor& log_scales,
                                       const std::vector<double>& actions,
                                       const MixtureSpec& spec = {},
                                       long* clamp_count = nullptr) {
  if (logits.rank() != 2 || logits.shape() != means.shape() ||
      logits.shape() != log_scales.shape() ||
      logits.dim(1) != spec.components ||
      actions.size() != static_cast<size_t>(logits.dim(0)))
    throw TensorError("logistic_mixture_logprob: logits " +
                      shape_str(logits.shape()) + " means " +
                      shape_str(means.shape()) + " log_scales " +
                      shape_str(log_scales.shape()) + " actions " +
                      std::to_string(actions.size()));
  const int N = logits.dim(0), C = spec.components;
  auto n = detail::make_node({N}, {logits, means, log_scales});
  std::vector<double> acts = actions;
  for (double& a : acts) {
    if (a < spec.lo || a > spec.hi) {
      if (clamp_count) ++(*clamp_count);
      a = a < spec.lo ? spec.lo : spec.hi;
    }
  }
  // Forward pass caches per-row terms for the hand-derived backward.
  std::vector<double> w(static_cast<size_t>(N) * C),
      mass(static_cast<size_t>(N) * C), scal(static_cast<size_t>(N) * C),
      prob(static_cast<size_t>(N));
  std::vector<detail::MixtureEdge> lo_e(static_cast<size_t>(N) * C),
      hi_e(static_cast<size_t>(N) * C);
  for (int r = 0; r < N; ++r) {
    detail::mixture_row(logits.value().data() + static_cast<size_t>(r) * C,
                        means.value().data() + static_cast<size_t>(r) * C,
                        log_scales.value().data() + static_cast<size_t>(r) * C,
                        acts[static_cast<size_t>(r)], spec,
                        &n->value[static_cast<size_t>(r)],
                        w.data() + static_cast<size_t>(r) * C,
                        lo_e.data() + static_cast<size_t>(r) * C,
                        hi_e.data() + static_cast<size_t>(r) * C,
                        mass.data() + static_cast<size_t>(r) * C,
                        scal.data() + static_cast<size_t>(r) * C,
                        &prob[static_cast<size_t>(r)]);
  }
  if (n->requires_grad) {
    TensorNode* self = n.get();
    auto pl = n->parents[0];
    auto pm = n->parents[1];
    auto ps = n->parents[2];
    const double ls_min = spec.log_scale_min;
    n->backprop = [self, pl, pm, ps, N, C, w, mass, scal, prob, lo_e, hi_e,
                   ls_min]() {
      for (int r = 0; r < N; ++r) {
        const double p = prob[static_cast<size_t>(r)];
        if (p < 1e-12) continue;  // clamped log; zero local derivative
        const double g = self->grad[static_cast<size_t>(r)] / p;
        for (int i = 0; i < C; ++i) {
          const size_t k = static_cast<size_t>(r) * C + i;
          if (detail::wants(pl))
            pl->grad[k] += g * w[k] * (mass[k] - p);
          const auto& le = lo_e[k];
          const auto& he = hi_e[k];
          const double dhi = he.absorbed ? 0.0 : he.cdf * (1.0 - he.cdf);
          const double dlo = le.absorbed ? 0.0 : le.cdf * (1.0 - le.cdf);
          if (detail::wants(pm)) {
            const double dmass_dm = (-dhi + dlo) / scal[k];
            pm->grad[k] += g * w[k] * dmass_dm;
          }
          if (detail::wants(ps) && ps->value[k] > ls_min) {
            const double dmass_dls = -he.u * dhi + le.u * dlo;
            ps->grad[k] += g * w[k] * dmass_dls;
          }
        }
      }
    };
  }
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Backward driver
// ---------------------------------------------------------------------------

// Populates gradients for every requires_grad node reachable from `loss`.
// Gradients of the visited subgraph are zeroed first, so each call yields
// the gradients of exactly this loss.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw TensorError("backward: loss must be scalar, got shape " +
                      shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw TensorError("backward: loss does not depend on any parameter");
  // Iterative post-order DFS over requires_grad nodes.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (TensorNode* node : order) node->grad.assign(node->value.size(), 0.0);
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

}  // namespace taco
