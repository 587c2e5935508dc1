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

// Residual two-layer adapter placed after a frozen patch encoder:
//   z = x + tanh(x W1 + b1) W2 + b2      (row-wise)

#pragma once

#include <string_view>

#include "xstain/ops.hpp"
#include "xstain/params.hpp"

namespace xstain {

template <typename T>
struct AdapterParams {
  Matrix<T> w1;  // D x Dh
  Matrix<T> b1;  // 1 x Dh
  Matrix<T> w2;  // Dh x D
  Matrix<T> b2;  // 1 x D

  std::size_t dim() const { return w1.rows; }
  std::size_t hidden() const { return w1.cols; }

  template <typename F>
  void visit(F&& f) {
    f("adapter.w1", w1, 2);
    f("adapter.b1", b1, 1);
    f("adapter.w2", w2, 2);
    f("adapter.b2", b2, 1);
  }
  template <typename F>
  void visit(F&& f) const {
    f("adapter.w1", w1, 2);
    f("adapter.b1", b1, 1);
    f("adapter.w2", w2, 2);
    f("adapter.b2", b2, 1);
  }

  template <typename U>
  AdapterParams<U> cast() const {
    return {w1.template cast<U>(), b1.template cast<U>(), w2.template cast<U>(), b2.template cast<U>()};
  }
};

template <typename T>
AdapterParams<T> make_adapter(std::size_t dim, std::size_t hidden) {
  require(dim > 0 && hidden > 0, "adapter: dimensions must be positive");
  return {Matrix<T>(dim, hidden), Matrix<T>(1, hidden), Matrix<T>(hidden, dim), Matrix<T>(1, dim)};
}

// W1 Xavier-uniform, everything else zero: the adapter starts as the identity.
template <typename T>
AdapterParams<T> init_adapter(std::size_t dim, std::size_t hidden, Rng& rng) {
  auto p = make_adapter<T>(dim, hidden);
  xavier_uniform(p.w1, rng);
  return p;
}

template <typename T>
struct AdapterCache {
  Matrix<T> x;
  Matrix<T> h;  // tanh(x W1 + b1)
};

template <typename T>
Matrix<T> adapter_forward(const Matrix<T>& x, const AdapterParams<T>& p, AdapterCache<T>* cache = nullptr) {
  require(x.cols == p.dim(), "adapter: input width does not match parameters");
  Matrix<T> h = ops::tanh(ops::add_bias(ops::matmul(x, p.w1), p.b1));
  Matrix<T> z = ops::add_bias(ops::matmul(h, p.w2), p.b2);
  for (std::size_t i = 0; i < z.size(); ++i) z.data[i] += x.data[i];
  if (cache != nullptr) {
    cache->x = x;
    cache->h = std::move(h);
  }
  return z;
}

// Accumulates parameter gradients; gx (optional) receives d loss / d x.
template <typename T>
void adapter_backward(const AdapterCache<T>& cache, const AdapterParams<T>& p, const Matrix<T>& gz,
                      AdapterParams<T>& grads, Matrix<T>* gx = nullptr) {
  ops::add_bias_backward<T>(gz, nullptr, &grads.b2);
  Matrix<T> gh = zeros_like(cache.h);
  ops::matmul_backward(cache.h, p.w2, gz, &gh, &grads.w2);
  Matrix<T> gpre = zeros_like(cache.h);
  ops::tanh_backward(cache.h, gh, gpre);
  ops::add_bias_backward<T>(gpre, nullptr, &grads.b1);
  ops::matmul_backward(cache.x, p.w1, gpre, gx, &grads.w1);
  if (gx != nullptr) ops::add_bias_backward<T>(gz, gx, nullptr);
}

}  // namespace xstain
