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

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "xstain/params.hpp"

namespace xstain {

// Linear warmup 0 -> lr_max over warmup_steps, then cosine decay to lr_min at
// total_steps. step == warmup_steps returns lr_max and step == total_steps
// returns lr_min, both exactly.
double cosine_lr(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double lr_max,
                 double lr_min);

struct AdamWOptions {
  double weight_decay = 1e-2;
  std::array<double, 2> betas = {0.9, 0.999};
  double eps = 1e-8;
};

// Decoupled-decay Adam over a list of tensors. Moments live here, in the
// order the tensors were registered.
class AdamW {
 public:
  explicit AdamW(AdamWOptions opts = {}) : opts_(opts) {}

  std::int64_t steps() const { return t_; }

  // params and grads are parallel lists with identical shapes; names are
  // used for diagnostics only.
  void step(const std::vector<Matrix<float>*>& params, const std::vector<const Matrix<float>*>& grads,
            const std::vector<std::string>& names, double lr);

  template <typename P>
  void step(P& params, const P& grads, double lr) {
    std::vector<Matrix<float>*> ps;
    std::vector<const Matrix<float>*> gs;
    std::vector<std::string> names;
    params.visit([&](std::string_view name, Matrix<float>& m, int) {
      ps.push_back(&m);
      names.emplace_back(name);
    });
    grads.visit([&](std::string_view, const Matrix<float>& m, int) { gs.push_back(&m); });
    step(ps, gs, names, lr);
  }

 private:
  AdamWOptions opts_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Scales all gradients so their joint l2 norm is at most max_norm. Returns
// the norm before clipping.
template <typename... P>
double clip_global_norm(double max_norm, P&... grads) {
  double sq = 0.0;
  auto acc = [&](auto& g) {
    g.visit([&](std::string_view, const auto& m, int) {
      for (auto v : m.data) sq += static_cast<double>(v) * static_cast<double>(v);
    });
  };
  (acc(grads), ...);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    auto apply = [&](auto& g) {
      g.visit([&](std::string_view, auto& m, int) {
        for (auto& v : m.data) v = static_cast<float>(static_cast<double>(v) * s);
      });
    };
    (apply(grads), ...);
  }
  return norm;
}

}  // namespace xstain
