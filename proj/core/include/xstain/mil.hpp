// Copyright 2026 The xstain Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Gated-attention MIL pooling:
//   s_i = w . (tanh(z_i V) * sigmoid(z_i U)),  a = softmax(s)
//   e   = (sum_i a_i z_i) W_out
// One parameter set is shared by every stain.

#pragma once

#include <string_view>

#include "xstain/ops.hpp"
#include "xstain/params.hpp"

namespace xstain {

template <typename T>
struct MilParams {
  Matrix<T> v;     // D x L
  Matrix<T> u;     // D x L
  Matrix<T> w;     // L x 1
  Matrix<T> wout;  // D x D

  std::size_t dim() const { return v.rows; }
  std::size_t attn_dim() const { return v.cols; }

  template <typename F>
  void visit(F&& f) {
    f("mil.v", v, 2);
    f("mil.u", u, 2);
    f("mil.w", w, 1);
    f("mil.wout", wout, 2);
  }
  template <typename F>
  void visit(F&& f) const {
    f("mil.v", v, 2);
    f("mil.u", u, 2);
    f("mil.w", w, 1);
    f("mil.wout", wout, 2);
  }

  template <typename U>
  MilParams<U> cast() const {
    return {v.template cast<U>(), u.template cast<U>(), w.template cast<U>(), wout.template cast<U>()};
  }
};

template <typename T>
MilParams<T> make_mil(std::size_t dim, std::size_t attn_dim) {
  require(dim > 0 && attn_dim > 0, "mil: dimensions must be positive");
  return {Matrix<T>(dim, attn_dim), Matrix<T>(dim, attn_dim), Matrix<T>(attn_dim, 1), Matrix<T>(dim, dim)};
}

template <typename T>
MilParams<T> init_mil(std::size_t dim, std::size_t attn_dim, Rng& rng) {
  auto p = make_mil<T>(dim, attn_dim);
  xavier_uniform(p.v, rng);
  xavier_uniform(p.u, rng);
  xavier_uniform(p.w, rng);
  xavier_uniform(p.wout, rng);
  return p;
}

template <typename T>
struct MilCache {
  Matrix<T> z;       // N x D
  Matrix<T> hv;      // tanh(z V)
  Matrix<T> hu;      // sigmoid(z U)
  Matrix<T> gate;    // hv * hu
  Matrix<T> attn;    // 1 x N
  Matrix<T> pooled;  // 1 x D
};

// Returns the 1 x D slide embedding.
template <typename T>
Matrix<T> mil_aggregate(const Matrix<T>& z, const MilParams<T>& p, MilCache<T>* cache = nullptr) {
  if (z.rows == 0) fail(ErrorKind::kInvalidArgument, "mil: empty bag");
  require(z.cols == p.dim(), "mil: embedding width does not match parameters");
  Matrix<T> hv = ops::tanh(ops::matmul(z, p.v));
  Matrix<T> hu = ops::sigmoid(ops::matmul(z, p.u));
  Matrix<T> gate = ops::hadamard(hv, hu);
  Matrix<T> scores = ops::transpose(ops::matmul(gate, p.w));  // 1 x N
  Matrix<T> attn = ops::softmax_rows(scores);
  Matrix<T> pooled = ops::matmul(attn, z);
  Matrix<T> e = ops::matmul(pooled, p.wout);
  if (cache != nullptr) {
    cache->z = z;
    cache->hv = std::move(hv);
    cache->hu = std::move(hu);
    cache->gate = std::move(gate);
    cache->attn = std::move(attn);
    cache->pooled = std::move(pooled);
  }
  return e;
}

template <typename T>
Matrix<T> mil_attention(const Matrix<T>& z, const MilParams<T>& p) {
  MilCache<T> c;
  mil_aggregate(z, p, &c);
  return c.attn;
}

// Accumulates parameter gradients for upstream ge (1 x D); gz (optional)
// receives d loss / d z.
template <typename T>
void mil_backward(const MilCache<T>& c, const MilParams<T>& p, const Matrix<T>& ge, MilParams<T>& grads,
                  Matrix<T>* gz = nullptr) {
  Matrix<T> g_pooled = zeros_like(c.pooled);
  ops::matmul_backward(c.pooled, p.wout, ge, &g_pooled, &grads.wout);
  Matrix<T> g_attn = zeros_like(c.attn);
  ops::matmul_backward(c.attn, c.z, g_pooled, &g_attn, gz);
  Matrix<T> g_scores_row = zeros_like(c.attn);
  ops::softmax_rows_backward(c.attn, g_attn, T(1), g_scores_row);
  const Matrix<T> g_scores = ops::transpose(g_scores_row);  // N x 1
  Matrix<T> g_gate = zeros_like(c.gate);
  ops::matmul_backward(c.gate, p.w, g_scores, &g_gate, &grads.w);
  Matrix<T> g_hv = zeros_like(c.hv), g_hu = zeros_like(c.hu);
  ops::hadamard_backward(c.hv, c.hu, g_gate, &g_hv, &g_hu);
  Matrix<T> g_pre_v = zeros_like(c.hv), g_pre_u = zeros_like(c.hu);
  ops::tanh_backward(c.hv, g_hv, g_pre_v);
  ops::sigmoid_backward(c.hu, g_hu, g_pre_u);
  ops::matmul_backward(c.z, p.v, g_pre_v, gz, &grads.v);
  ops::matmul_backward(c.z, p.u, g_pre_u, gz, &grads.u);
}

}  // namespace xstain
