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

#include "xstain/train_config.hpp"

#include <set>

namespace xstain {

namespace {

const char* ramp_name(ScheduleRamp r) { return r == ScheduleRamp::kLinear ? "linear" : "cosine"; }
const char* scope_name(NegativeScope s) { return s == NegativeScope::kCase ? "case" : "batch"; }
const char* sim_name(SimilarityMap s) { return s == SimilarityMap::kAffine ? "affine" : "clamped"; }

}  // namespace

void validate(const TrainConfig& cfg) {
  for (int stage : {1, 2}) {
    const int e = cfg.epochs_for_stage(stage);
    require(e >= 0, "train config: epochs must be nonnegative");
    require(cfg.warmup_epochs >= 0 && (e == 0 || cfg.warmup_epochs < e),
            "train config: need 0 <= warmup_epochs < epochs");
  }
  require(cfg.lr_min > 0.0 && cfg.lr_min <= cfg.lr_max, "train config: need 0 < lr_min <= lr_max");
  require(cfg.batch_cases >= 1, "train config: batch_cases must be positive");
  require(cfg.tau > 0.0, "train config: tau must be positive");
  require(cfg.weight_decay >= 0.0, "train config: weight_decay must be nonnegative");
  require(cfg.betas[0] >= 0.0 && cfg.betas[0] < 1.0 && cfg.betas[1] >= 0.0 && cfg.betas[1] < 1.0,
          "train config: betas must be in [0, 1)");
  require(cfg.adam_eps > 0.0, "train config: adam_eps must be positive");
  require(cfg.n_neg >= 0, "train config: n_neg must be nonnegative");
  require(cfg.heads >= 1 && cfg.d_hidden >= 1 && cfg.l_attn >= 1, "train config: model widths must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{{"epochs", cfg.epochs},
                     {"warmup_epochs", cfg.warmup_epochs},
                     {"lr_max", cfg.lr_max},
                     {"lr_min", cfg.lr_min},
                     {"batch_cases", cfg.batch_cases},
                     {"tau", cfg.tau},
                     {"weight_decay", cfg.weight_decay},
                     {"betas", cfg.betas},
                     {"adam_eps", cfg.adam_eps},
                     {"n_neg", cfg.n_neg},
                     {"seed", cfg.seed},
                     {"heads", cfg.heads},
                     {"d_hidden", cfg.d_hidden},
                     {"l_attn", cfg.l_attn},
                     {"grad_clip", cfg.grad_clip},
                     {"schedule_ramp", ramp_name(cfg.schedule.ramp)},
                     {"similarity_map", sim_name(cfg.schedule.similarity)},
                     {"shared_adapter", cfg.shared_adapter},
                     {"adapted_negatives", cfg.adapted_negatives},
                     {"negative_scope", scope_name(cfg.negative_scope)}};
  if (cfg.stage1_epochs) j["stage1_epochs"] = *cfg.stage1_epochs;
  if (cfg.stage2_epochs) j["stage2_epochs"] = *cfg.stage2_epochs;
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  static const std::set<std::string> known = {
      "epochs",       "warmup_epochs", "lr_max",        "lr_min",         "batch_cases",
      "tau",          "weight_decay",  "betas",         "adam_eps",       "n_neg",
      "seed",         "heads",         "d_hidden",      "l_attn",         "grad_clip",
      "schedule_ramp", "similarity_map", "shared_adapter", "adapted_negatives", "negative_scope", "stage1_epochs",
      "stage2_epochs"};
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) fail(ErrorKind::kFormat, "train config: unknown key '" + k + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("epochs", cfg.epochs);
  get("warmup_epochs", cfg.warmup_epochs);
  get("lr_max", cfg.lr_max);
  get("lr_min", cfg.lr_min);
  get("batch_cases", cfg.batch_cases);
  get("tau", cfg.tau);
  get("weight_decay", cfg.weight_decay);
  get("betas", cfg.betas);
  get("adam_eps", cfg.adam_eps);
  get("n_neg", cfg.n_neg);
  get("seed", cfg.seed);
  get("heads", cfg.heads);
  get("d_hidden", cfg.d_hidden);
  get("l_attn", cfg.l_attn);
  get("grad_clip", cfg.grad_clip);
  get("shared_adapter", cfg.shared_adapter);
  get("adapted_negatives", cfg.adapted_negatives);
  if (j.contains("schedule_ramp")) {
    const auto s = j.at("schedule_ramp").get<std::string>();
    if (s == "linear") cfg.schedule.ramp = ScheduleRamp::kLinear;
    else if (s == "cosine") cfg.schedule.ramp = ScheduleRamp::kCosine;
    else fail(ErrorKind::kFormat, "train config: unknown schedule_ramp '" + s + "'");
  }
  if (j.contains("similarity_map")) {
    const auto s = j.at("similarity_map").get<std::string>();
    if (s == "affine") cfg.schedule.similarity = SimilarityMap::kAffine;
    else if (s == "clamped") cfg.schedule.similarity = SimilarityMap::kClampedPositive;
    else fail(ErrorKind::kFormat, "train config: unknown similarity_map '" + s + "'");
  }
  if (j.contains("negative_scope")) {
    const auto s = j.at("negative_scope").get<std::string>();
    if (s == "case") cfg.negative_scope = NegativeScope::kCase;
    else if (s == "batch") cfg.negative_scope = NegativeScope::kBatch;
    else fail(ErrorKind::kFormat, "train config: unknown negative_scope '" + s + "'");
  }
  if (j.contains("stage1_epochs")) cfg.stage1_epochs = j.at("stage1_epochs").get<int>();
  if (j.contains("stage2_epochs")) cfg.stage2_epochs = j.at("stage2_epochs").get<int>();
}

}  // namespace xstain
