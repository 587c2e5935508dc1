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
#include <cstdint>
#include <optional>

#include <nlohmann/json.hpp>

#include "xstain/losses.hpp"

namespace xstain {

// Where patch-level negatives come from: other positions of the anchor's own
// case, or of any case in the batch.
enum class NegativeScope { kCase, kBatch };

struct TrainConfig {
  int epochs = 120;
  int warmup_epochs = 5;
  double lr_max = 1e-4;
  double lr_min = 1e-8;
  int batch_cases = 24;
  double tau = 0.07;
  double weight_decay = 1e-2;
  std::array<double, 2> betas = {0.9, 0.999};
  double adam_eps = 1e-8;
  int n_neg = 256;
  std::uint64_t seed = 0;
  int heads = 4;
  int d_hidden = 512;  // adapter hidden width
  int l_attn = 256;    // MIL attention width
  double grad_clip = 5.0;  // global-norm clip; <= 0 disables
  WeightSchedule schedule{};
  bool shared_adapter = false;      // also pass IHC bags through the adapter in stage 1
  bool adapted_negatives = false;   // CPA negatives from adapted (vs raw) views
  NegativeScope negative_scope = NegativeScope::kBatch;
  std::optional<int> stage1_epochs;  // overrides epochs for stage 1
  std::optional<int> stage2_epochs;  // overrides epochs for stage 2

  int epochs_for_stage(int stage) const {
    const auto& o = stage == 1 ? stage1_epochs : stage2_epochs;
    return o.value_or(epochs);
  }
};

// Throws on violated invariants (0 <= warmup < epochs, 0 < lr_min <= lr_max, ...).
void validate(const TrainConfig& cfg);

void to_json(nlohmann::json& j, const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& cfg);

}  // namespace xstain
