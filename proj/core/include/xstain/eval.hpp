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

// H&E-only inference, downstream probes and retrieval diagnostics.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xstain/adapter.hpp"
#include "xstain/bag.hpp"
#include "xstain/caf.hpp"
#include "xstain/mil.hpp"

namespace xstain {

struct SlideEmbedding {
  std::string case_id;
  StainId stain = StainId::kHE;
  std::vector<float> vector;
};

// e = mil(adapter(he)). Nothing but the H&E bag is read.
SlideEmbedding embed_he_only(const PatchBag& he, const AdapterParams<float>& adapter, const MilParams<float>& mil,
                             const std::string& case_id = {});

std::vector<SlideEmbedding> embed_cases(const CaseSet& cases, const AdapterParams<float>& adapter,
                                        const MilParams<float>& mil);

// Raw H&E rows averaged per case; the non-pretrained baseline.
std::vector<SlideEmbedding> mean_pool_cases(const CaseSet& cases);

// Single-row H&E bags carrying the embeddings, with the source labels and
// survival. This is the on-disk embedding dump.
CaseSet embeddings_as_cases(const CaseSet& source, const std::vector<SlideEmbedding>& emb);

// Feature matrix plus targets, one row per case.
struct EmbeddingTable {
  std::vector<std::string> case_ids;
  Matrix<double> x;
  std::optional<std::vector<int>> labels;
  std::optional<std::vector<Survival>> survival;
};

// Every case must hold a single-row H&E bag.
EmbeddingTable table_from_cases(const CaseSet& cases);

// Mann-Whitney AUC, ties count 1/2.
double auc(std::span<const double> scores, std::span<const int> labels);

// Harrell's C-index. Pair (i, j) is comparable when event_i and t_i < t_j;
// concordant when risk_i > risk_j, 1/2 on risk ties.
double c_index(std::span<const double> risks, std::span<const double> times, std::span<const std::uint8_t> events);

struct EvalReport {
  std::string task;
  std::string param_key;  // "k" or "folds"
  int param = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;  // per seed or per fold
  std::string config_hash;
};

nlohmann::json to_json(const EvalReport& r);

struct ProbeOptions {
  int steps = 500;
  double lr = 0.1;
  double weight_decay = 1e-4;
  bool standardize = false;  // z-score with training-split statistics
};

// Logistic probe on k cases per class; AUC on the rest.
EvalReport kshot_probe(const Matrix<double>& x, std::span<const int> labels, int k,
                       std::span<const std::uint64_t> seeds, const ProbeOptions& opts = {});

struct CoxOptions {
  int steps = 500;
  double lr = 0.01;
  bool standardize = false;
};

// Event-stratified folds; linear Cox model per fold; C-index on held-out.
EvalReport survival_cv(const Matrix<double>& x, std::span<const Survival> survival, int folds, std::uint64_t seed,
                       const CoxOptions& opts = {});

std::vector<std::uint64_t> default_seeds(int n);

struct SlideRetrieval {
  double top1 = 0.0;        // nearest IHC slide belongs to the same case
  double cosine_gap = 0.0;  // mean same-case cosine minus mean other-case cosine
};

struct PatchRetrieval {
  double top1 = 0.0;            // nearest IHC patch of the case is the aligned row
  std::size_t queries = 0;      // H&E patches
  double top1_per_stain = 0.0;  // same, searching one IHC stain at a time
  std::size_t stain_queries = 0;
};

struct RetrievalReport {
  PatchRetrieval patch;
  std::optional<SlideRetrieval> slide_he_only;
  std::optional<SlideRetrieval> slide_fused;
};

nlohmann::json to_json(const RetrievalReport& r);

// For each H&E patch, the cosine nearest neighbour among all IHC patches of
// the same case; a hit when it sits at the aligned grid position. H&E rows go
// through the adapter when one is given.
PatchRetrieval patch_retrieval(const CaseSet& cases, const AdapterParams<float>* adapter);

// he[i] is case i's H&E embedding; ihc holds every IHC slide embedding with
// ihc_owner its case index.
SlideRetrieval slide_retrieval(const std::vector<std::vector<float>>& he, const std::vector<std::vector<float>>& ihc,
                               const std::vector<std::size_t>& ihc_owner);

RetrievalReport retrieval_diagnostics(const CaseSet& cases, const AdapterParams<float>* adapter,
                                      const MilParams<float>* mil = nullptr, const CafParams<float>* caf = nullptr);

}  // namespace xstain
