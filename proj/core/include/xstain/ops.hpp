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

// Differentiable dense primitives. Every forward has a matching reverse rule
// that ACCUMULATES into the gradient outputs (callers zero them first).
// All reductions run in ascending index order so results are reproducible.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "xstain/tensor.hpp"

namespace xstain::ops {

// ---------------------------------------------------------------------------
// matmul: C = A * B

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.cols == b.rows, "matmul: inner dimensions differ");
  Matrix<T> c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    T* crow = c.data.data() + i * c.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const T aik = a(i, k);
      const T* brow = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

// ga += gc * b^T ; gb += a^T * gc. Either output may be null.
template <typename T>
void matmul_backward(const Matrix<T>& a, const Matrix<T>& b, const Matrix<T>& gc, Matrix<T>* ga,
                     Matrix<T>* gb) {
  if (ga != nullptr) {
    for (std::size_t i = 0; i < a.rows; ++i) {
      for (std::size_t k = 0; k < a.cols; ++k) {
        T s = T(0);
        for (std::size_t j = 0; j < b.cols; ++j) s += gc(i, j) * b(k, j);
        (*ga)(i, k) += s;
      }
    }
  }
  if (gb != nullptr) {
    for (std::size_t i = 0; i < a.rows; ++i) {
      for (std::size_t k = 0; k < a.cols; ++k) {
        const T aik = a(i, k);
        for (std::size_t j = 0; j < b.cols; ++j) (*gb)(k, j) += aik * gc(i, j);
      }
    }
  }
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

// ---------------------------------------------------------------------------
// add_bias: Y = X + 1 b  (b is 1 x cols)

template <typename T>
Matrix<T> add_bias(const Matrix<T>& x, const Matrix<T>& b) {
  require(b.rows == 1 && b.cols == x.cols, "add_bias: bias shape mismatch");
  Matrix<T> y = x;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) y(i, j) += b(0, j);
  return y;
}

template <typename T>
void add_bias_backward(const Matrix<T>& gy, Matrix<T>* gx, Matrix<T>* gb) {
  if (gx != nullptr)
    for (std::size_t i = 0; i < gy.size(); ++i) gx->data[i] += gy.data[i];
  if (gb != nullptr)
    for (std::size_t i = 0; i < gy.rows; ++i)
      for (std::size_t j = 0; j < gy.cols; ++j) (*gb)(0, j) += gy(i, j);
}

// ---------------------------------------------------------------------------
// Elementwise activations. Reverse rules take the forward OUTPUT.

template <typename T>
Matrix<T> tanh(const Matrix<T>& x) {
  Matrix<T> y = x;
  for (auto& v : y.data) v = std::tanh(v);
  return y;
}

template <typename T>
void tanh_backward(const Matrix<T>& y, const Matrix<T>& gy, Matrix<T>& gx) {
  for (std::size_t i = 0; i < y.size(); ++i) gx.data[i] += gy.data[i] * (T(1) - y.data[i] * y.data[i]);
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Matrix<T> sigmoid(const Matrix<T>& x) {
  Matrix<T> y = x;
  for (auto& v : y.data) v = sigmoid(v);
  return y;
}

template <typename T>
void sigmoid_backward(const Matrix<T>& y, const Matrix<T>& gy, Matrix<T>& gx) {
  for (std::size_t i = 0; i < y.size(); ++i) gx.data[i] += gy.data[i] * y.data[i] * (T(1) - y.data[i]);
}

template <typename T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.same_shape(b), "hadamard: shape mismatch");
  Matrix<T> c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] *= b.data[i];
  return c;
}

template <typename T>
void hadamard_backward(const Matrix<T>& a, const Matrix<T>& b, const Matrix<T>& gc, Matrix<T>* ga,
                       Matrix<T>* gb) {
  for (std::size_t i = 0; i < gc.size(); ++i) {
    if (ga != nullptr) ga->data[i] += gc.data[i] * b.data[i];
    if (gb != nullptr) gb->data[i] += gc.data[i] * a.data[i];
  }
}

template <typename T>
Matrix<T> scale(const Matrix<T>& x, T s) {
  Matrix<T> y = x;
  for (auto& v : y.data) v *= s;
  return y;
}

template <typename T>
void scale_backward(const Matrix<T>& gy, T s, Matrix<T>& gx) {
  for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] += s * gy.data[i];
}

// ---------------------------------------------------------------------------
// softmax(v / tau), max-subtracted.

template <typename T>
std::vector<T> softmax(std::span<const T> v, T tau = T(1)) {
  require(tau > T(0), "softmax: temperature must be positive");
  require(!v.empty(), "softmax: empty input");
  T mx = -std::numeric_limits<T>::infinity();
  for (T x : v) mx = std::max(mx, x);
  std::vector<T> out(v.size());
  T sum = T(0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp((v[i] - mx) / tau);
    sum += out[i];
  }
  for (auto& o : out) o /= sum;
  return out;
}

template <typename T>
void softmax_backward(std::span<const T> y, std::span<const T> gy, T tau, std::span<T> gx) {
  T inner = T(0);
  for (std::size_t i = 0; i < y.size(); ++i) inner += y[i] * gy[i];
  for (std::size_t i = 0; i < y.size(); ++i) gx[i] += y[i] * (gy[i] - inner) / tau;
}

// Row-wise softmax over the column axis.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& x, T tau = T(1)) {
  Matrix<T> y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    auto r = softmax<T>(x.row(i), tau);
    std::copy(r.begin(), r.end(), y.row(i).begin());
  }
  return y;
}

template <typename T>
void softmax_rows_backward(const Matrix<T>& y, const Matrix<T>& gy, T tau, Matrix<T>& gx) {
  for (std::size_t i = 0; i < y.rows; ++i) softmax_backward<T>(y.row(i), gy.row(i), tau, gx.row(i));
}

// ---------------------------------------------------------------------------
// l2 normalization of each row.

template <typename T>
Matrix<T> l2_normalize_rows(const Matrix<T>& x, std::vector<T>* norms = nullptr) {
  Matrix<T> y = x;
  if (norms != nullptr) norms->assign(x.rows, T(0));
  for (std::size_t i = 0; i < x.rows; ++i) {
    const T n = norm2<T>(x.row(i));
    require(n > T(0), "l2_normalize: zero-norm row");
    for (auto& v : y.row(i)) v /= n;
    if (norms != nullptr) (*norms)[i] = n;
  }
  return y;
}

// Single-vector reverse rule: gx += (gy - y <y, gy>) / |x|
template <typename T>
void l2_normalize_backward(std::span<const T> y, T norm, std::span<const T> gy, std::span<T> gx) {
  const T inner = dot(y, gy);
  for (std::size_t j = 0; j < y.size(); ++j) gx[j] += (gy[j] - y[j] * inner) / norm;
}

template <typename T>
void l2_normalize_rows_backward(const Matrix<T>& y, const std::vector<T>& norms, const Matrix<T>& gy,
                                Matrix<T>& gx) {
  for (std::size_t i = 0; i < y.rows; ++i) l2_normalize_backward<T>(y.row(i), norms[i], gy.row(i), gx.row(i));
}

// ---------------------------------------------------------------------------
// cosine similarity, clamped to [-1, 1].

template <typename T>
T cosine_similarity(std::span<const T> a, std::span<const T> b) {
  require(a.size() == b.size(), "cosine_similarity: length mismatch");
  const T na = norm2(a);
  const T nb = norm2(b);
  require(na > T(0) && nb > T(0), "cosine_similarity: zero-norm input");
  return std::clamp(dot(a, b) / (na * nb), T(-1), T(1));
}

// d cos / d a = (b/|b| - cos * a/|a|) / |a|, symmetric for b.
template <typename T>
void cosine_similarity_backward(std::span<const T> a, std::span<const T> b, T gout, std::span<T> ga,
                                std::span<T> gb) {
  const T na = norm2(a);
  const T nb = norm2(b);
  const T c = dot(a, b) / (na * nb);
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (!ga.empty()) ga[j] += gout * (b[j] / nb - c * a[j] / na) / na;
    if (!gb.empty()) gb[j] += gout * (a[j] / na - c * b[j] / nb) / nb;
  }
}

// ---------------------------------------------------------------------------
// mean over rows -> 1 x cols

template <typename T>
Matrix<T> mean_rows(const Matrix<T>& x) {
  require(x.rows > 0, "mean_rows: empty input");
  Matrix<T> y(1, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) y(0, j) += x(i, j);
  for (auto& v : y.data) v /= static_cast<T>(x.rows);
  return y;
}

template <typename T>
void mean_rows_backward(const Matrix<T>& gy, Matrix<T>& gx) {
  const T inv = T(1) / static_cast<T>(gx.rows);
  for (std::size_t i = 0; i < gx.rows; ++i)
    for (std::size_t j = 0; j < gx.cols; ++j) gx(i, j) += gy(0, j) * inv;
}

// ---------------------------------------------------------------------------
// concat along the column axis

template <typename T>
Matrix<T> concat_cols(const std::vector<Matrix<T>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require(p.rows == parts[0].rows, "concat_cols: row count mismatch");
    cols += p.cols;
  }
  Matrix<T> y(parts[0].rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.rows; ++i)
      std::copy(p.row(i).begin(), p.row(i).end(), y.row(i).begin() + off);
    off += p.cols;
  }
  return y;
}

template <typename T>
void concat_cols_backward(const Matrix<T>& gy, std::vector<Matrix<T>>& gparts) {
  std::size_t off = 0;
  for (auto& g : gparts) {
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) g(i, j) += gy(i, off + j);
    off += g.cols;
  }
}

}  // namespace xstain::ops
