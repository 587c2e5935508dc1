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

#include "xstain/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include <nlohmann/json.hpp>

#include "xstain/losses.hpp"
#include "xstain/optim.hpp"

namespace xstain {

namespace {

constexpr std::uint64_t kTagAdapterInit = 11;
constexpr std::uint64_t kTagCafInit = 12;
constexpr std::uint64_t kTagMilInit = 13;
constexpr std::uint64_t kTagShuffle = 20;
constexpr std::uint64_t kTagNegatives = 21;

void emit(const TrainHooks& hooks, const std::string& msg) {
  if (hooks.log) hooks.log(msg);
}

std::size_t common_dim(const CaseSet& cases) {
  require(!cases.cases.empty(), "train: empty dataset");
  const std::size_t d = cases.cases[0].he().dim();
  for (const auto& c : cases.cases) {
    validate_case(c, /*require_ihc=*/true);
    require(c.he().dim() == d, "train: case '" + c.case_id + "' has a different embedding width");
  }
  return d;
}

void check_loss(double loss, int stage, std::int64_t step) {
  if (!std::isfinite(loss))
    fail(ErrorKind::kNumeric, "train stage " + std::to_string(stage) + ": non-finite loss at step " +
                                  std::to_string(step));
}

// Adds rows [row0, row0 + src.rows) of `from` into `to`.
void add_rows(const Matrix<float>& from, std::size_t row0, Matrix<float>& to) {
  for (std::size_t i = 0; i < to.rows; ++i)
    for (std::size_t j = 0; j < to.cols; ++j) to(i, j) += from(row0 + i, j);
}

// ---------------------------------------------------------------------------
// Stage 1

struct StainView {
  StainId stain = StainId::kHE;
  const Matrix<float>* raw = nullptr;
  bool adapted = false;
  Matrix<float> out;  // adapted output (if adapted)
  AdapterCache<float> cache;
  Matrix<float> grad;

  const Matrix<float>& value() const { return adapted ? out : *raw; }
};

double stage1_step(const CaseSet& cases, const std::vector<std::size_t>& batch, const AdapterParams<float>& adapter,
                   const TrainConfig& cfg, std::int64_t iter, std::int64_t total_iters, std::uint64_t neg_seed,
                   AdapterParams<float>& grads) {
  // Views per case: H&E first (std::map order), then IHC in id order.
  std::vector<std::vector<StainView>> views(batch.size());
  std::vector<StainId> ihc_all;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (const auto& [stain, bag] : cases.cases[batch[b]].bags) {
      StainView v;
      v.stain = stain;
      v.raw = &bag.embeddings;
      v.adapted = stain == StainId::kHE || cfg.shared_adapter;
      if (v.adapted) v.out = adapter_forward(bag.embeddings, adapter, &v.cache);
      v.grad = Matrix<float>(bag.embeddings.rows, bag.embeddings.cols);
      views[b].push_back(std::move(v));
      if (is_ihc(stain) && std::find(ihc_all.begin(), ihc_all.end(), stain) == ihc_all.end())
        ihc_all.push_back(stain);
    }
  }
  std::sort(ihc_all.begin(), ihc_all.end());

  const std::size_t D = views[0][0].raw->cols;
  std::size_t K = 0;
  std::vector<std::size_t> anchor_off(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    anchor_off[b] = K;
    K += views[b][0].raw->rows;
  }

  ContrastiveBatch<float> cb;
  cb.tau = static_cast<float>(cfg.tau);
  cb.t = iter;
  cb.total = total_iters;
  cb.anchors = Matrix<float>(K, D);
  cb.positives.assign(ihc_all.size(), Matrix<float>(K, D));
  cb.present.assign(ihc_all.size(), std::vector<std::uint8_t>(K, 0));

  // Pool layout: case-major, stain-minor, N rows per view.
  std::vector<std::vector<std::size_t>> pool_off(batch.size());
  std::size_t P = 0;
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (std::size_t s = 0; s < views[b].size(); ++s) {
      pool_off[b].push_back(P);
      P += views[b][s].raw->rows;
    }
  cb.negative_pool = Matrix<float>(P, D);

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t n = views[b][0].raw->rows;
    for (std::size_t s = 0; s < views[b].size(); ++s) {
      const auto& v = views[b][s];
      const Matrix<float>& pool_src = (v.adapted && cfg.adapted_negatives) ? v.out : *v.raw;
      std::copy(pool_src.data.begin(), pool_src.data.end(), cb.negative_pool.row(pool_off[b][s]).begin());
      if (v.stain == StainId::kHE) {
        std::copy(v.out.data.begin(), v.out.data.end(), cb.anchors.row(anchor_off[b]).begin());
        continue;
      }
      const std::size_t c = static_cast<std::size_t>(
          std::find(ihc_all.begin(), ihc_all.end(), v.stain) - ihc_all.begin());
      const Matrix<float>& val = v.value();
      std::copy(val.data.begin(), val.data.end(), cb.positives[c].row(anchor_off[b]).begin());
      for (std::size_t i = 0; i < n; ++i) cb.present[c][anchor_off[b] + i] = 1;
    }
  }

  std::vector<std::size_t> rows(batch.size()), stains(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    rows[b] = views[b][0].raw->rows;
    stains[b] = views[b].size();
  }
  cb.negatives = sample_patch_negatives(rows, stains, cfg.negative_scope, cfg.n_neg, neg_seed);

  CpaGrads<float> g;
  const double loss = cpa_loss(cb, cfg.schedule, &g);

  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t s = 0; s < views[b].size(); ++s) {
      auto& v = views[b][s];
      if (!v.adapted) continue;
      if (v.stain == StainId::kHE) {
        add_rows(g.anchors, anchor_off[b], v.grad);
      } else {
        const std::size_t c = static_cast<std::size_t>(
            std::find(ihc_all.begin(), ihc_all.end(), v.stain) - ihc_all.begin());
        add_rows(g.positives[c], anchor_off[b], v.grad);
      }
      if (cfg.adapted_negatives) add_rows(g.negative_pool, pool_off[b][s], v.grad);
      adapter_backward(v.cache, adapter, v.grad, grads);
    }
  }
  return loss;
}

std::vector<NamedTensor> merged(std::vector<NamedTensor> a, const std::vector<NamedTensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

const NamedTensor& find_tensor(const std::vector<NamedTensor>& ts, const std::string& name) {
  for (const auto& t : ts)
    if (t.name == name) return t;
  fail(ErrorKind::kFormat, "checkpoint: missing tensor '" + name + "'");
}

}  // namespace

std::vector<std::vector<std::uint32_t>> sample_patch_negatives(const std::vector<std::size_t>& rows,
                                                               const std::vector<std::size_t>& stains,
                                                               NegativeScope scope, int n_neg, std::uint64_t seed) {
  require(rows.size() == stains.size(), "negatives: rows/stains length mismatch");
  require(n_neg >= 0, "negatives: n_neg must be nonnegative");
  std::vector<std::size_t> case_off(rows.size());
  std::size_t P = 0, K = 0;
  for (std::size_t b = 0; b < rows.size(); ++b) {
    case_off[b] = P;
    P += rows[b] * stains[b];
    K += rows[b];
  }
  Rng rng(seed);
  std::vector<std::vector<std::uint32_t>> out;
  out.reserve(K);
  std::vector<std::uint32_t> excluded;
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const std::size_t n = rows[b];
    const bool in_case = scope == NegativeScope::kCase;
    const auto lo = static_cast<std::uint32_t>(in_case ? case_off[b] : 0);
    const auto hi = static_cast<std::uint32_t>(in_case ? case_off[b] + stains[b] * n : P);
    for (std::size_t i = 0; i < n; ++i) {
      excluded.clear();
      for (std::size_t s = 0; s < stains[b]; ++s) excluded.push_back(static_cast<std::uint32_t>(case_off[b] + s * n + i));
      const auto eligible = static_cast<std::uint32_t>(hi - lo - excluded.size());
      const auto take = std::min<std::uint32_t>(eligible, static_cast<std::uint32_t>(n_neg));
      auto picks = rng.sample_without_replacement(eligible, take);
      // Map [0, eligible) onto [lo, hi) minus the sorted excluded rows.
      for (auto& r : picks) {
        r += lo;
        for (auto e : excluded)
          if (r >= e) ++r;
      }
      out.push_back(std::move(picks));
    }
  }
  return out;
}

std::string to_json_line(const LossRecord& r) {
  nlohmann::json j = {{"stage", r.stage}, {"epoch", r.epoch}, {"step", r.step}, {"lr", r.lr}, {"loss", r.loss}};
  return j.dump();
}

AdapterParams<float> initial_adapter(std::size_t dim, const TrainConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, kTagAdapterInit));
  return init_adapter<float>(dim, static_cast<std::size_t>(cfg.d_hidden), rng);
}

CafParams<float> initial_caf(std::size_t dim, const TrainConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, kTagCafInit));
  return init_caf<float>(dim, static_cast<std::size_t>(cfg.heads), rng);
}

MilParams<float> initial_mil(std::size_t dim, const TrainConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, kTagMilInit));
  return init_mil<float>(dim, static_cast<std::size_t>(cfg.l_attn), rng);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n_cases, int batch_cases, std::uint64_t seed,
                                                    int stage, int epoch) {
  require(batch_cases >= 1, "epoch_batches: batch size must be positive");
  std::vector<std::size_t> order(n_cases);
  for (std::size_t i = 0; i < n_cases; ++i) order[i] = i;
  Rng rng(mix_seed(mix_seed(seed, kTagShuffle), static_cast<std::uint64_t>(stage) * 1000003ULL +
                                                    static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n_cases; i += static_cast<std::size_t>(batch_cases))
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n_cases, i + batch_cases)));
  return out;
}

Stage1Result train_stage1(const CaseSet& cases, const TrainConfig& cfg, const TrainHooks& hooks) {
  validate(cfg);
  const std::size_t dim = common_dim(cases);
  Stage1Result res;
  res.adapter = initial_adapter(dim, cfg);
  const int epochs = cfg.epochs_for_stage(1);
  const auto per_epoch = static_cast<std::int64_t>((cases.size() + cfg.batch_cases - 1) / cfg.batch_cases);
  const std::int64_t total = epochs * per_epoch;
  const std::int64_t warmup = std::min<std::int64_t>(cfg.warmup_epochs * per_epoch, total);
  AdamW opt({cfg.weight_decay, cfg.betas, cfg.adam_eps});
  auto grads = zeros_like_params(res.adapter);
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    double sum = 0.0;
    const auto batches = epoch_batches(cases.size(), cfg.batch_cases, cfg.seed, 1, epoch);
    for (const auto& batch : batches) {
      ++step;
      const double lr = cosine_lr(step, total, warmup, cfg.lr_max, cfg.lr_min);
      zero_params(grads);
      const double loss = stage1_step(cases, batch, res.adapter, cfg, step - 1, total,
                                      mix_seed(mix_seed(cfg.seed, kTagNegatives), static_cast<std::uint64_t>(step)),
                                      grads);
      check_loss(loss, 1, step);
      const double norm = clip_global_norm(cfg.grad_clip, grads);
      if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "stage 1 step %lld: clipped gradient norm %.4g to %.4g",
                      static_cast<long long>(step), norm, cfg.grad_clip);
        emit(hooks, buf);
      }
      opt.step(res.adapter, grads, lr);
      LossRecord rec{1, epoch, step, lr, loss};
      res.log.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
      sum += loss;
    }
    res.epoch_loss.push_back(sum / static_cast<double>(batches.size()));
    char buf[128];
    std::snprintf(buf, sizeof buf, "stage 1 epoch %d/%d mean CPA loss %.6f", epoch, epochs, res.epoch_loss.back());
    emit(hooks, buf);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Stage 2

Stage2Result train_stage2(const CaseSet& cases, const AdapterParams<float>& adapter, const TrainConfig& cfg,
                          const TrainHooks& hooks) {
  validate(cfg);
  const std::size_t dim = common_dim(cases);
  require(adapter.dim() == dim, "train stage 2: adapter width does not match the data");
  Stage2Result res;
  res.caf = initial_caf(dim, cfg);
  res.mil = initial_mil(dim, cfg);

  // The adapter is frozen: adapt every H&E bag once.
  std::vector<std::vector<Matrix<float>>> stacks(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    for (const auto& [stain, bag] : cases.cases[i].bags)
      stacks[i].push_back(stain == StainId::kHE ? adapter_forward(bag.embeddings, adapter) : bag.embeddings);
    if (stacks[i].size() < 2) fail(ErrorKind::kAlignment, "case '" + cases.cases[i].case_id + "': fusion needs >= 2 stains");
  }

  const int epochs = cfg.epochs_for_stage(2);
  const auto per_epoch = static_cast<std::int64_t>((cases.size() + cfg.batch_cases - 1) / cfg.batch_cases);
  const std::int64_t total = epochs * per_epoch;
  const std::int64_t warmup = std::min<std::int64_t>(cfg.warmup_epochs * per_epoch, total);
  AdamW opt({cfg.weight_decay, cfg.betas, cfg.adam_eps});
  auto g_caf = zeros_like_params(res.caf);
  auto g_mil = zeros_like_params(res.mil);
  const auto tau = static_cast<float>(cfg.tau);
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    double sum = 0.0;
    const auto batches = epoch_batches(cases.size(), cfg.batch_cases, cfg.seed, 2, epoch);
    for (const auto& batch : batches) {
      ++step;
      const double lr = cosine_lr(step, total, warmup, cfg.lr_max, cfg.lr_min);
      zero_params(g_caf);
      zero_params(g_mil);

      // Slide embeddings: row r of `emb` belongs to case owner[r]; the first
      // row of each case is its fused H&E embedding.
      const std::size_t B = batch.size();
      std::vector<Matrix<float>> fused(B);
      std::vector<MilCache<float>> caches;
      std::vector<std::size_t> owner, first(B);
      std::vector<std::vector<float>> emb;
      for (std::size_t b = 0; b < B; ++b) {
        const auto& stack = stacks[batch[b]];
        fused[b] = caf_fuse(stack, res.caf);
        first[b] = emb.size();
        for (std::size_t s = 0; s < stack.size(); ++s) {
          caches.emplace_back();
          const Matrix<float> e = mil_aggregate(s == 0 ? fused[b] : stack[s], res.mil, &caches.back());
          emb.push_back(e.data);
          owner.push_back(b);
        }
      }

      std::vector<Matrix<float>> g_emb(emb.size(), Matrix<float>(1, dim));
      double loss = 0.0;
      const float inv_b = 1.0f / static_cast<float>(B);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t m = stacks[batch[b]].size();
        Matrix<float> ihc(m - 1, dim);
        for (std::size_t s = 1; s < m; ++s) std::copy(emb[first[b] + s].begin(), emb[first[b] + s].end(), ihc.row(s - 1).begin());
        std::vector<std::size_t> neg_rows;
        for (std::size_t r = 0; r < emb.size(); ++r)
          if (owner[r] != b) neg_rows.push_back(r);
        Matrix<float> negs(neg_rows.size(), dim);
        for (std::size_t n = 0; n < neg_rows.size(); ++n)
          std::copy(emb[neg_rows[n]].begin(), emb[neg_rows[n]].end(), negs.row(n).begin());
        CgaGrads<float> g;
        loss += static_cast<double>(cga_loss<float>(emb[first[b]], ihc, negs, tau, &g)) / static_cast<double>(B);
        axpy<float>(inv_b, g.he, g_emb[first[b]].row(0));
        for (std::size_t s = 1; s < m; ++s) axpy<float>(inv_b, g.ihc.row(s - 1), g_emb[first[b] + s].row(0));
        for (std::size_t n = 0; n < neg_rows.size(); ++n) axpy<float>(inv_b, g.negatives.row(n), g_emb[neg_rows[n]].row(0));
      }
      check_loss(loss, 2, step);

      for (std::size_t r = 0; r < emb.size(); ++r) {
        const std::size_t b = owner[r];
        if (r != first[b]) {
          mil_backward(caches[r], res.mil, g_emb[r], g_mil);
          continue;
        }
        Matrix<float> g_fused = zeros_like(fused[b]);
        mil_backward(caches[r], res.mil, g_emb[r], g_mil, &g_fused);
        caf_backward(stacks[batch[b]], res.caf, g_fused, g_caf);
      }

      const double norm = clip_global_norm(cfg.grad_clip, g_caf, g_mil);
      if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "stage 2 step %lld: clipped gradient norm %.4g to %.4g",
                      static_cast<long long>(step), norm, cfg.grad_clip);
        emit(hooks, buf);
      }
      std::vector<Matrix<float>*> ps;
      std::vector<const Matrix<float>*> gs;
      std::vector<std::string> names;
      res.caf.visit([&](std::string_view n, Matrix<float>& m, int) { ps.push_back(&m); names.emplace_back(n); });
      res.mil.visit([&](std::string_view n, Matrix<float>& m, int) { ps.push_back(&m); names.emplace_back(n); });
      g_caf.visit([&](std::string_view, const Matrix<float>& m, int) { gs.push_back(&m); });
      g_mil.visit([&](std::string_view, const Matrix<float>& m, int) { gs.push_back(&m); });
      opt.step(ps, gs, names, lr);

      LossRecord rec{2, epoch, step, lr, loss};
      res.log.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
      sum += loss;
    }
    res.epoch_loss.push_back(sum / static_cast<double>(batches.size()));
    char buf[128];
    std::snprintf(buf, sizeof buf, "stage 2 epoch %d/%d mean CGA loss %.6f", epoch, epochs, res.epoch_loss.back());
    emit(hooks, buf);
  }
  return res;
}

// ---------------------------------------------------------------------------

std::vector<NamedTensor> adapter_checkpoint(const AdapterParams<float>& a) { return to_named(a); }

AdapterParams<float> adapter_from_checkpoint(const std::vector<NamedTensor>& tensors) {
  const auto& w1 = find_tensor(tensors, "adapter.w1");
  if (w1.dims.size() != 2) fail(ErrorKind::kFormat, "checkpoint: adapter.w1 must be 2-D");
  auto a = make_adapter<float>(w1.dims[0], w1.dims[1]);
  from_named(a, tensors);
  return a;
}

std::vector<NamedTensor> fusion_checkpoint(const CafParams<float>& caf, const MilParams<float>& mil) {
  return merged(to_named(caf), to_named(mil));
}

CafParams<float> caf_from_checkpoint(const std::vector<NamedTensor>& tensors) {
  const auto& wo = find_tensor(tensors, "caf.wo");
  if (wo.dims.size() != 2) fail(ErrorKind::kFormat, "checkpoint: caf.wo must be 2-D");
  std::size_t heads = 0;
  while (std::any_of(tensors.begin(), tensors.end(),
                     [&](const NamedTensor& t) { return t.name == "caf.wq." + std::to_string(heads); }))
    ++heads;
  if (heads == 0 || wo.dims[1] % heads != 0) fail(ErrorKind::kFormat, "checkpoint: inconsistent CAF head count");
  auto caf = make_caf<float>(wo.dims[1], heads);
  from_named(caf, tensors);
  return caf;
}

MilParams<float> mil_from_checkpoint(const std::vector<NamedTensor>& tensors) {
  const auto& v = find_tensor(tensors, "mil.v");
  if (v.dims.size() != 2) fail(ErrorKind::kFormat, "checkpoint: mil.v must be 2-D");
  auto mil = make_mil<float>(v.dims[0], v.dims[1]);
  from_named(mil, tensors);
  return mil;
}

}  // namespace xstain
