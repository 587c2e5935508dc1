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

#include "xstain/optim.hpp"

#include <numbers>

namespace xstain {

double cosine_lr(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double lr_max,
                 double lr_min) {
  require(total_steps >= 0 && step >= 0 && step <= total_steps, "cosine_lr: step out of range");
  require(warmup_steps >= 0 && warmup_steps <= total_steps, "cosine_lr: warmup exceeds total steps");
  if (step < warmup_steps) return lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (step == warmup_steps) return lr_max;
  if (step == total_steps) return lr_min;
  const double p = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * p));
}

void AdamW::step(const std::vector<Matrix<float>*>& params, const std::vector<const Matrix<float>*>& grads,
                 const std::vector<std::string>& names, double lr) {
  require(params.size() == grads.size(), "adamw: parameter/gradient count mismatch");
  require(lr > 0.0, "adamw: learning rate must be positive");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->same_shape(*grads[i]), "adamw: shape mismatch for '" + names[i] + "'");
    if (!all_finite(*grads[i]))
      fail(ErrorKind::kNumeric, "adamw: non-finite gradient in tensor '" + names[i] + "' at step " +
                                    std::to_string(t_ + 1));
  }
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  require(m_.size() == params.size(), "adamw: parameter list changed between steps");
  ++t_;
  const auto [b1, b2] = opts_.betas;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i]->data;
    const auto& g = grads[i]->data;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      double theta = p[j];
      theta -= lr * opts_.weight_decay * theta;
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * static_cast<double>(g[j]) * g[j];
      const double mhat = m[j] / c1, vhat = v[j] / c2;
      theta -= lr * mhat / (std::sqrt(vhat) + opts_.eps);
      p[j] = static_cast<float>(theta);
    }
  }
}

}  // namespace xstain
