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

// Cross-stain attention fusion. At every patch position the M aligned stain
// vectors attend to each other with multi-head self-attention; the H&E row of
// Concat(heads) W_O + S replaces the H&E features. Positions never interact.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "xstain/ops.hpp"
#include "xstain/params.hpp"

namespace xstain {

template <typename T>
struct CafParams {
  std::vector<Matrix<T>> wq;  // H of D x dk
  std::vector<Matrix<T>> wk;
  std::vector<Matrix<T>> wv;
  Matrix<T> wo;  // (H dk) x D

  std::size_t heads() const { return wq.size(); }
  std::size_t dim() const { return wo.cols; }
  std::size_t head_dim() const { return wq.empty() ? 0 : wq[0].cols; }

  template <typename Self, typename F>
  static void visit_impl(Self& self, F&& f) {
    for (std::size_t h = 0; h < self.wq.size(); ++h) {
      const std::string s = std::to_string(h);
      f("caf.wq." + s, self.wq[h], 2);
      f("caf.wk." + s, self.wk[h], 2);
      f("caf.wv." + s, self.wv[h], 2);
    }
    f("caf.wo", self.wo, 2);
  }
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  template <typename U>
  CafParams<U> cast() const {
    CafParams<U> out;
    for (std::size_t h = 0; h < heads(); ++h) {
      out.wq.push_back(wq[h].template cast<U>());
      out.wk.push_back(wk[h].template cast<U>());
      out.wv.push_back(wv[h].template cast<U>());
    }
    out.wo = wo.template cast<U>();
    return out;
  }
};

template <typename T>
CafParams<T> make_caf(std::size_t dim, std::size_t heads) {
  require(heads >= 1, "caf: at least one head required");
  require(dim % heads == 0, "caf: dim must be divisible by heads");
  const std::size_t dk = dim / heads;
  CafParams<T> p;
  p.wq.assign(heads, Matrix<T>(dim, dk));
  p.wk.assign(heads, Matrix<T>(dim, dk));
  p.wv.assign(heads, Matrix<T>(dim, dk));
  p.wo = Matrix<T>(heads * dk, dim);
  return p;
}

// Q/K/V Xavier-uniform, W_O zero: fusion starts as the identity on H&E.
template <typename T>
CafParams<T> init_caf(std::size_t dim, std::size_t heads, Rng& rng) {
  auto p = make_caf<T>(dim, heads);
  for (std::size_t h = 0; h < heads; ++h) {
    xavier_uniform(p.wq[h], rng);
    xavier_uniform(p.wk[h], rng);
    xavier_uniform(p.wv[h], rng);
  }
  return p;
}

namespace detail {

template <typename T>
void check_stack(const std::vector<Matrix<T>>& stains, const CafParams<T>& p) {
  require(!stains.empty(), "caf: empty stain stack");
  for (const auto& s : stains) {
    if (s.rows != stains[0].rows)
      fail(ErrorKind::kAlignment, "caf: stain bags have different patch counts");
    require(s.cols == p.dim(), "caf: embedding width does not match parameters");
  }
}

template <typename T>
Matrix<T> gather_position(const std::vector<Matrix<T>>& stains, std::size_t n) {
  Matrix<T> x(stains.size(), stains[0].cols);
  for (std::size_t m = 0; m < stains.size(); ++m)
    std::copy(stains[m].row(n).begin(), stains[m].row(n).end(), x.row(m).begin());
  return x;
}

// Intermediates of one head at one position (H&E query only).
template <typename T>
struct HeadState {
  Matrix<T> q;     // 1 x dk
  Matrix<T> k;     // M x dk
  Matrix<T> v;     // M x dk
  Matrix<T> attn;  // 1 x M
  Matrix<T> out;   // 1 x dk
};

template <typename T>
HeadState<T> head_forward(const Matrix<T>& x, const Matrix<T>& x0, const CafParams<T>& p, std::size_t h) {
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(p.head_dim()));
  HeadState<T> s;
  s.q = ops::matmul(x0, p.wq[h]);
  s.k = ops::matmul(x, p.wk[h]);
  s.v = ops::matmul(x, p.wv[h]);
  s.attn = ops::softmax_rows(ops::scale(ops::matmul(s.q, ops::transpose(s.k)), inv_sqrt_dk));
  s.out = ops::matmul(s.attn, s.v);
  return s;
}

}  // namespace detail

// Attention weights of the H&E query at position n for head h (1 x M).
template <typename T>
Matrix<T> caf_attention(const std::vector<Matrix<T>>& stains, const CafParams<T>& p, std::size_t n,
                        std::size_t h) {
  detail::check_stack(stains, p);
  const Matrix<T> x = detail::gather_position(stains, n);
  Matrix<T> x0(1, x.cols);
  std::copy(x.row(0).begin(), x.row(0).end(), x0.data.begin());
  return detail::head_forward(x, x0, p, h).attn;
}

// stains[0] is H&E. Returns the fused N x D H&E rows.
template <typename T>
Matrix<T> caf_fuse(const std::vector<Matrix<T>>& stains, const CafParams<T>& p) {
  detail::check_stack(stains, p);
  const std::size_t n_pos = stains[0].rows, dim = p.dim();
  Matrix<T> out(n_pos, dim);
  std::vector<Matrix<T>> head_out(p.heads());
  for (std::size_t n = 0; n < n_pos; ++n) {
    const Matrix<T> x = detail::gather_position(stains, n);
    Matrix<T> x0(1, dim);
    std::copy(x.row(0).begin(), x.row(0).end(), x0.data.begin());
    for (std::size_t h = 0; h < p.heads(); ++h) head_out[h] = detail::head_forward(x, x0, p, h).out;
    Matrix<T> y = ops::matmul(ops::concat_cols(head_out), p.wo);
    for (std::size_t j = 0; j < dim; ++j) out(n, j) = y(0, j) + x0(0, j);
  }
  return out;
}

// Parameter gradients of <g_out, caf_fuse(stains)>. Inputs are frozen
// (adapted H&E and raw IHC), so no input gradient is produced.
template <typename T>
void caf_backward(const std::vector<Matrix<T>>& stains, const CafParams<T>& p, const Matrix<T>& g_out,
                  CafParams<T>& grads) {
  detail::check_stack(stains, p);
  const std::size_t n_pos = stains[0].rows, dim = p.dim(), H = p.heads();
  require(g_out.rows == n_pos && g_out.cols == dim, "caf: gradient shape mismatch");
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(p.head_dim()));
  std::vector<detail::HeadState<T>> hs(H);
  std::vector<Matrix<T>> head_out(H);
  for (std::size_t n = 0; n < n_pos; ++n) {
    const Matrix<T> x = detail::gather_position(stains, n);
    Matrix<T> x0(1, dim);
    std::copy(x.row(0).begin(), x.row(0).end(), x0.data.begin());
    for (std::size_t h = 0; h < H; ++h) {
      hs[h] = detail::head_forward(x, x0, p, h);
      head_out[h] = hs[h].out;
    }
    const Matrix<T> cat = ops::concat_cols(head_out);
    Matrix<T> gy(1, dim);
    std::copy(g_out.row(n).begin(), g_out.row(n).end(), gy.data.begin());
    Matrix<T> gcat = zeros_like(cat);
    ops::matmul_backward(cat, p.wo, gy, &gcat, &grads.wo);
    std::vector<Matrix<T>> g_heads;
    for (std::size_t h = 0; h < H; ++h) g_heads.push_back(zeros_like(head_out[h]));
    ops::concat_cols_backward(gcat, g_heads);

    for (std::size_t h = 0; h < H; ++h) {
      const auto& s = hs[h];
      Matrix<T> g_attn = zeros_like(s.attn), g_v = zeros_like(s.v);
      ops::matmul_backward(s.attn, s.v, g_heads[h], &g_attn, &g_v);
      Matrix<T> g_scaled = zeros_like(s.attn);
      ops::softmax_rows_backward(s.attn, g_attn, T(1), g_scaled);
      Matrix<T> g_logits = zeros_like(s.attn);
      ops::scale_backward(g_scaled, inv_sqrt_dk, g_logits);
      const Matrix<T> kt = ops::transpose(s.k);
      Matrix<T> g_q = zeros_like(s.q), g_kt = zeros_like(kt);
      ops::matmul_backward(s.q, kt, g_logits, &g_q, &g_kt);
      const Matrix<T> g_k = ops::transpose(g_kt);
      ops::matmul_backward<T>(x0, p.wq[h], g_q, nullptr, &grads.wq[h]);
      ops::matmul_backward<T>(x, p.wk[h], g_k, nullptr, &grads.wk[h]);
      ops::matmul_backward<T>(x, p.wv[h], g_v, nullptr, &grads.wv[h]);
    }
  }
}

}  // namespace xstain
