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

// Two-stage training.
//   Stage 1: adapter on H&E patches, CPA against aligned IHC patches.
//   Stage 2: adapter frozen; CAF + shared MIL trained with CGA on slide
//            embeddings, negatives from the other cases of the batch.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xstain/adapter.hpp"
#include "xstain/bag.hpp"
#include "xstain/caf.hpp"
#include "xstain/mil.hpp"
#include "xstain/train_config.hpp"

namespace xstain {

struct LossRecord {
  int stage = 1;
  int epoch = 0;          // 1-based
  std::int64_t step = 0;  // 1-based optimizer step
  double lr = 0.0;
  double loss = 0.0;
};

std::string to_json_line(const LossRecord& r);

struct TrainHooks {
  std::function<void(const std::string&)> log;  // diagnostics; null = silent
  std::function<void(const LossRecord&)> on_step;
};

struct Stage1Result {
  AdapterParams<float> adapter;
  std::vector<LossRecord> log;
  std::vector<double> epoch_loss;  // mean step loss per epoch
};

struct Stage2Result {
  CafParams<float> caf;
  MilParams<float> mil;
  std::vector<LossRecord> log;
  std::vector<double> epoch_loss;
};

// Initial parameters exactly as the trainers draw them.
AdapterParams<float> initial_adapter(std::size_t dim, const TrainConfig& cfg);
CafParams<float> initial_caf(std::size_t dim, const TrainConfig& cfg);
MilParams<float> initial_mil(std::size_t dim, const TrainConfig& cfg);

// Case batches of one epoch as drawn by the seeded shuffler.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n_cases, int batch_cases, std::uint64_t seed,
                                                    int stage, int epoch);

// CPA negatives for a batch whose case b has rows[b] positions and stains[b]
// stain views, laid out case-major then stain-minor in the pool. Anchor i of
// case b never receives row i of any of its own case's views. Returns one
// list per anchor, anchors in case order.
std::vector<std::vector<std::uint32_t>> sample_patch_negatives(const std::vector<std::size_t>& rows,
                                                               const std::vector<std::size_t>& stains,
                                                               NegativeScope scope, int n_neg, std::uint64_t seed);

Stage1Result train_stage1(const CaseSet& cases, const TrainConfig& cfg, const TrainHooks& hooks = {});

Stage2Result train_stage2(const CaseSet& cases, const AdapterParams<float>& adapter, const TrainConfig& cfg,
                          const TrainHooks& hooks = {});

// Checkpoint bundles.
std::vector<NamedTensor> adapter_checkpoint(const AdapterParams<float>& a);
AdapterParams<float> adapter_from_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> fusion_checkpoint(const CafParams<float>& caf, const MilParams<float>& mil);
CafParams<float> caf_from_checkpoint(const std::vector<NamedTensor>& tensors);
MilParams<float> mil_from_checkpoint(const std::vector<NamedTensor>& tensors);

}  // namespace xstain
