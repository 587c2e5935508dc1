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

#include <benchmark/benchmark.h>

#include "xstain/adapter.hpp"
#include "xstain/caf.hpp"
#include "xstain/losses.hpp"
#include "xstain/mil.hpp"
#include "xstain/params.hpp"
#include "xstain/synthetic.hpp"
#include "xstain/trainer.hpp"

using namespace xstain;

namespace {

Matrix<float> randn(std::size_t r, std::size_t c, Rng& rng) {
  Matrix<float> m(r, c);
  fill_normal(m, rng, 1.0);
  return m;
}

// Args: patches, embedding width.
void BM_AdapterForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), d = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  auto p = init_adapter<float>(d, 512, rng);
  fill_normal(p.w2, rng, 0.01);
  const auto x = randn(n, d, rng);
  for (auto _ : state) benchmark::DoNotOptimize(adapter_forward(x, p));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AdapterForward)->Args({64, 32})->Args({1024, 32})->Args({256, 768});

void BM_CafFuse(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), d = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  auto p = init_caf<float>(d, 4, rng);
  fill_normal(p.wo, rng, 0.1);
  std::vector<Matrix<float>> stains;
  for (int s = 0; s < 5; ++s) stains.push_back(randn(n, d, rng));
  for (auto _ : state) benchmark::DoNotOptimize(caf_fuse(stains, p));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CafFuse)->Args({64, 32})->Args({1024, 32})->Args({256, 768});

void BM_MilAggregate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), d = static_cast<std::size_t>(state.range(1));
  Rng rng(3);
  const auto p = init_mil<float>(d, 256, rng);
  const auto z = randn(n, d, rng);
  for (auto _ : state) benchmark::DoNotOptimize(mil_aggregate(z, p));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MilAggregate)->Args({64, 32})->Args({1024, 32})->Args({256, 768});

// Args: anchors, negatives per anchor. Four IHC stains, width 32.
void BM_CpaLossAndGrads(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto n_neg = static_cast<std::size_t>(state.range(1));
  Rng rng(4);
  ContrastiveBatch<float> b;
  b.anchors = randn(k, 32, rng);
  for (int c = 0; c < 4; ++c) b.positives.push_back(randn(k, 32, rng));
  b.negative_pool = randn(4 * k, 32, rng);
  b.negatives.resize(k);
  for (auto& list : b.negatives)
    for (std::size_t j = 0; j < n_neg; ++j) list.push_back(static_cast<std::uint32_t>(rng.below(4 * k)));
  b.t = 50;
  b.total = 100;
  for (auto _ : state) {
    CpaGrads<float> g;
    benchmark::DoNotOptimize(cpa_loss(b, WeightSchedule{}, &g));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CpaLossAndGrads)->Args({64, 256})->Args({512, 256});

// One stage-1 epoch on the standard synthetic set.
void BM_Stage1Epoch(benchmark::State& state) {
  SyntheticConfig sc;
  const auto cases = generate_synthetic(sc);
  TrainConfig tc;
  tc.epochs = 1;
  tc.warmup_epochs = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train_stage1(cases, tc));
}
BENCHMARK(BM_Stage1Epoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
