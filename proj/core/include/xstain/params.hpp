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

// Helpers over parameter structs. A parameter struct exposes
//   template <class F> void visit(F&& f);        // f(name, Matrix<T>&, rank)
//   template <class F> void visit(F&& f) const;
// and visits its tensors in a fixed order.

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "xstain/rng.hpp"
#include "xstain/tensor.hpp"

namespace xstain {

template <typename P>
P zeros_like_params(const P& p) {
  P g = p;
  g.visit([](std::string_view, auto& m, int) { m.zero(); });
  return g;
}

template <typename P>
void zero_params(P& p) {
  p.visit([](std::string_view, auto& m, int) { m.zero(); });
}

template <typename T, template <typename> class P>
std::vector<Matrix<T>*> tensor_ptrs(P<T>& p) {
  std::vector<Matrix<T>*> out;
  p.visit([&](std::string_view, Matrix<T>& m, int) { out.push_back(&m); });
  return out;
}

template <typename P>
std::size_t param_count(const P& p) {
  std::size_t n = 0;
  p.visit([&](std::string_view, const auto& m, int) { n += m.size(); });
  return n;
}

// Convert to checkpoint tensors (float storage).
template <typename P>
std::vector<NamedTensor> to_named(const P& p) {
  std::vector<NamedTensor> out;
  p.visit([&](std::string_view name, const auto& m, int rank) {
    NamedTensor t;
    t.name = std::string(name);
    if (rank == 1)
      t.dims = {static_cast<std::uint32_t>(m.size())};
    else
      t.dims = {static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)};
    t.values.reserve(m.size());
    for (auto v : m.data) t.values.push_back(static_cast<float>(v));
    out.push_back(std::move(t));
  });
  return out;
}

// Fill an already-shaped parameter struct from checkpoint tensors by name.
// Missing tensors and shape mismatches are errors naming the tensor.
template <typename P>
void from_named(P& p, const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*, std::less<>> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  p.visit([&](std::string_view name, auto& m, int) {
    auto it = by_name.find(name);
    if (it == by_name.end()) fail(ErrorKind::kFormat, "checkpoint: missing tensor '" + std::string(name) + "'");
    const NamedTensor& t = *it->second;
    if (t.numel() != m.size())
      fail(ErrorKind::kFormat, "checkpoint: tensor '" + std::string(name) + "' has wrong shape");
    using V = typename std::remove_reference_t<decltype(m)>::value_type;
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = static_cast<V>(t.values[i]);
  });
}

// Xavier/Glorot uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
void xavier_uniform(Matrix<T>& m, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
  for (auto& v : m.data) v = static_cast<T>(rng.uniform(-a, a));
}

template <typename T>
void fill_normal(Matrix<T>& m, Rng& rng, double scale) {
  for (auto& v : m.data) v = static_cast<T>(scale * rng.normal());
}

}  // namespace xstain
