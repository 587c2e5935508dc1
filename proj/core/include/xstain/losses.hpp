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

// Contrastive objectives: InfoNCE, the scheduled patch-alignment loss (CPA)
// and the slide-level global alignment loss (CGA).
//
// Scores are dot products of l2-normalized vectors, so every loss here is
// invariant to positive rescaling of its raw inputs.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "xstain/ops.hpp"
#include "xstain/tensor.hpp"

namespace xstain {

// ---------------------------------------------------------------------------
// InfoNCE on precomputed scores.

// -log(exp(s+/tau) / (exp(s+/tau) + sum_n exp(s_n/tau))). When gradient spans
// are non-empty, d loss / d score is accumulated into them.
template <typename T>
T info_nce_from_scores(T s_pos, std::span<const T> s_neg, T tau, T* g_pos = nullptr,
                       std::span<T> g_neg = {}) {
  require(tau > T(0), "info_nce: tau must be positive");
  T mx = s_pos / tau;
  for (T s : s_neg) mx = std::max(mx, s / tau);
  T denom = std::exp(s_pos / tau - mx);
  for (T s : s_neg) denom += std::exp(s / tau - mx);
  const T lse = mx + std::log(denom);
  const T loss = lse - s_pos / tau;
  if (g_pos != nullptr) {
    *g_pos += (std::exp(s_pos / tau - lse) - T(1)) / tau;
  }
  if (!g_neg.empty()) {
    for (std::size_t n = 0; n < s_neg.size(); ++n) g_neg[n] += std::exp(s_neg[n] / tau - lse) / tau;
  }
  // Zero negatives: lse == s_pos/tau exactly.
  return s_neg.empty() ? T(0) : std::max(loss, T(0));
}

template <typename T>
struct InfoNceGrads {
  std::vector<T> anchor;
  std::vector<T> positive;
  Matrix<T> negatives;
};

// InfoNCE over raw vectors; each input is l2-normalized before scoring.
template <typename T>
T info_nce(std::span<const T> anchor, std::span<const T> positive, const Matrix<T>& negatives, T tau,
           InfoNceGrads<T>* grads = nullptr) {
  require(!anchor.empty(), "info_nce: empty anchor");
  require(positive.size() == anchor.size(), "info_nce: positive length mismatch");
  require(negatives.rows == 0 || negatives.cols == anchor.size(), "info_nce: negative width mismatch");
  const std::size_t d = anchor.size();
  const T na = norm2(anchor), np = norm2(positive);
  require(na > T(0) && np > T(0), "info_nce: zero-norm input");
  std::vector<T> ah(d), ph(d);
  for (std::size_t j = 0; j < d; ++j) {
    ah[j] = anchor[j] / na;
    ph[j] = positive[j] / np;
  }
  std::vector<T> nnorm;
  Matrix<T> nh = negatives.rows > 0 ? ops::l2_normalize_rows(negatives, &nnorm) : Matrix<T>(0, d);
  const T s_pos = dot<T>(ah, ph);
  std::vector<T> s_neg(nh.rows);
  for (std::size_t n = 0; n < nh.rows; ++n) s_neg[n] = dot<T>(ah, nh.row(n));

  if (grads == nullptr) return info_nce_from_scores<T>(s_pos, s_neg, tau);

  T g_pos = T(0);
  std::vector<T> g_neg(nh.rows, T(0));
  const T loss = info_nce_from_scores<T>(s_pos, s_neg, tau, &g_pos, g_neg);

  std::vector<T> g_ah(d, T(0)), g_ph(d, T(0));
  Matrix<T> g_nh(nh.rows, d);
  axpy<T>(g_pos, ph, g_ah);
  axpy<T>(g_pos, ah, g_ph);
  for (std::size_t n = 0; n < nh.rows; ++n) {
    axpy<T>(g_neg[n], nh.row(n), g_ah);
    axpy<T>(g_neg[n], ah, g_nh.row(n));
  }
  grads->anchor.assign(d, T(0));
  grads->positive.assign(d, T(0));
  grads->negatives = Matrix<T>(nh.rows, d);
  ops::l2_normalize_backward<T>(ah, na, g_ah, grads->anchor);
  ops::l2_normalize_backward<T>(ph, np, g_ph, grads->positive);
  if (nh.rows > 0) ops::l2_normalize_rows_backward(nh, nnorm, g_nh, grads->negatives);
  return loss;
}

// ---------------------------------------------------------------------------
// Adaptive weighting w_t = (1 - g(t/T)) + g(t/T) * h(cos).

enum class ScheduleRamp { kLinear, kCosine };          // g(u) = u | (1 - cos(pi u)) / 2
enum class SimilarityMap { kAffine, kClampedPositive };  // h(x) = (1 + x) / 2 | max(x, 0)

struct WeightSchedule {
  ScheduleRamp ramp = ScheduleRamp::kLinear;
  SimilarityMap similarity = SimilarityMap::kAffine;
};

inline double schedule_ramp(ScheduleRamp ramp, double u) {
  switch (ramp) {
    case ScheduleRamp::kLinear:
      return u;
    case ScheduleRamp::kCosine:
      return 0.5 * (1.0 - std::cos(std::numbers::pi * u));
  }
  return u;
}

inline double similarity_map(SimilarityMap m, double x) {
  switch (m) {
    case SimilarityMap::kAffine:
      return 0.5 * (1.0 + x);
    case SimilarityMap::kClampedPositive:
      return std::max(x, 0.0);
  }
  return x;
}

inline double adaptive_weight(std::int64_t t, std::int64_t total, double cos_sim, WeightSchedule sched = {}) {
  require(total > 0, "adaptive_weight: total iterations must be positive");
  require(t >= 0 && t <= total, "adaptive_weight: iteration out of range");
  const double g = schedule_ramp(sched.ramp, static_cast<double>(t) / static_cast<double>(total));
  return (1.0 - g) + g * similarity_map(sched.similarity, std::clamp(cos_sim, -1.0, 1.0));
}

// ---------------------------------------------------------------------------
// CPA

// Negatives are given as a shared pool plus per-anchor row indices into it.
// present[c][k] == 0 marks anchor k as lacking stain c; an empty mask means
// every anchor has every stain.
template <typename T>
struct ContrastiveBatch {
  Matrix<T> anchors;                                  // K x D
  std::vector<Matrix<T>> positives;                   // C of K x D
  std::vector<std::vector<std::uint8_t>> present;     // C x K, optional
  Matrix<T> negative_pool;                            // P x D
  std::vector<std::vector<std::uint32_t>> negatives;  // K lists of pool rows
  T tau = T(0.07);
  std::int64_t t = 0;
  std::int64_t total = 1;

  bool has(std::size_t c, std::size_t k) const { return present.empty() || present[c][k] != 0; }
};

template <typename T>
void validate(const ContrastiveBatch<T>& b) {
  require(b.tau > T(0), "cpa: tau must be positive");
  require(b.total > 0 && b.t >= 0 && b.t <= b.total, "cpa: iteration out of range");
  require(b.anchors.rows > 0, "cpa: no anchors");
  require(!b.positives.empty(), "cpa: at least one IHC stain required");
  for (const auto& p : b.positives) require(p.same_shape(b.anchors), "cpa: positive shape mismatch");
  require(b.present.empty() || b.present.size() == b.positives.size(), "cpa: mask stain count mismatch");
  require(b.negatives.size() == b.anchors.rows, "cpa: negative lists must match anchors");
  require(b.negative_pool.rows == 0 || b.negative_pool.cols == b.anchors.cols, "cpa: pool width mismatch");
  for (const auto& list : b.negatives)
    for (auto idx : list) require(idx < b.negative_pool.rows, "cpa: negative index out of range");
}

// Normalized coefficients w_t(z, z_c+) / W_c^t as a C x K matrix (zero where a
// stain is absent). Treated as constants by cpa_loss.
template <typename T>
Matrix<T> cpa_coefficients(const ContrastiveBatch<T>& b, WeightSchedule sched = {}) {
  validate(b);
  const std::size_t C = b.positives.size(), K = b.anchors.rows;
  Matrix<T> coef(C, K);
  for (std::size_t c = 0; c < C; ++c) {
    double total_w = 0.0;
    std::vector<double> w(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      if (!b.has(c, k)) continue;
      const double cs = static_cast<double>(ops::cosine_similarity<T>(b.anchors.row(k), b.positives[c].row(k)));
      w[k] = adaptive_weight(b.t, b.total, cs, sched);
      total_w += w[k];
    }
    bool any = false;
    for (std::size_t k = 0; k < K; ++k) any = any || b.has(c, k);
    if (!any) continue;
    if (!(total_w > 0.0)) fail(ErrorKind::kNumeric, "cpa: weight normalizer is zero for stain " + std::to_string(c));
    for (std::size_t k = 0; k < K; ++k) coef(c, k) = static_cast<T>(w[k] / total_w);
  }
  return coef;
}

template <typename T>
struct CpaGrads {
  Matrix<T> anchors;
  std::vector<Matrix<T>> positives;
  Matrix<T> negative_pool;
};

// sum_k sum_c coef[c][k] * InfoNCE(z_k, z_{c,k}+, negatives_k).
// With uniform weights this is the sum over stains of the per-stain mean.
template <typename T>
T cpa_loss(const ContrastiveBatch<T>& b, const Matrix<T>& coef, CpaGrads<T>* grads = nullptr) {
  validate(b);
  const std::size_t C = b.positives.size(), K = b.anchors.rows, D = b.anchors.cols;
  require(coef.rows == C && coef.cols == K, "cpa: coefficient shape mismatch");

  std::vector<T> a_norm, pool_norm;
  const Matrix<T> ah = ops::l2_normalize_rows(b.anchors, &a_norm);
  const Matrix<T> poolh =
      b.negative_pool.rows > 0 ? ops::l2_normalize_rows(b.negative_pool, &pool_norm) : Matrix<T>(0, D);
  std::vector<Matrix<T>> ph(C);
  std::vector<std::vector<T>> p_norm(C);
  for (std::size_t c = 0; c < C; ++c) {
    ph[c] = Matrix<T>(K, D);
    p_norm[c].assign(K, T(1));
    for (std::size_t k = 0; k < K; ++k) {
      if (!b.has(c, k)) continue;
      const T n = norm2<T>(b.positives[c].row(k));
      require(n > T(0), "cpa: zero-norm positive");
      p_norm[c][k] = n;
      for (std::size_t j = 0; j < D; ++j) ph[c](k, j) = b.positives[c](k, j) / n;
    }
  }

  Matrix<T> g_ah, g_poolh;
  std::vector<Matrix<T>> g_ph;
  if (grads != nullptr) {
    g_ah = Matrix<T>(K, D);
    g_poolh = Matrix<T>(poolh.rows, D);
    g_ph.assign(C, Matrix<T>(K, D));
  }

  T loss = T(0);
  std::vector<T> s_neg, g_neg;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& idx = b.negatives[k];
    s_neg.resize(idx.size());
    for (std::size_t n = 0; n < idx.size(); ++n) s_neg[n] = dot<T>(ah.row(k), poolh.row(idx[n]));
    for (std::size_t c = 0; c < C; ++c) {
      if (!b.has(c, k)) continue;
      const T alpha = coef(c, k);
      const T s_pos = dot<T>(ah.row(k), ph[c].row(k));
      if (grads == nullptr) {
        loss += alpha * info_nce_from_scores<T>(s_pos, s_neg, b.tau);
        continue;
      }
      T g_pos = T(0);
      g_neg.assign(idx.size(), T(0));
      loss += alpha * info_nce_from_scores<T>(s_pos, s_neg, b.tau, &g_pos, g_neg);
      g_pos *= alpha;
      axpy<T>(g_pos, ph[c].row(k), g_ah.row(k));
      axpy<T>(g_pos, ah.row(k), g_ph[c].row(k));
      for (std::size_t n = 0; n < idx.size(); ++n) {
        const T g = alpha * g_neg[n];
        axpy<T>(g, poolh.row(idx[n]), g_ah.row(k));
        axpy<T>(g, ah.row(k), g_poolh.row(idx[n]));
      }
    }
  }

  if (grads != nullptr) {
    grads->anchors = Matrix<T>(K, D);
    ops::l2_normalize_rows_backward(ah, a_norm, g_ah, grads->anchors);
    grads->positives.assign(C, Matrix<T>(K, D));
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < K; ++k)
        if (b.has(c, k))
          ops::l2_normalize_backward<T>(ph[c].row(k), p_norm[c][k], g_ph[c].row(k), grads->positives[c].row(k));
    grads->negative_pool = Matrix<T>(poolh.rows, D);
    if (poolh.rows > 0) ops::l2_normalize_rows_backward(poolh, pool_norm, g_poolh, grads->negative_pool);
  }
  return loss;
}

template <typename T>
T cpa_loss(const ContrastiveBatch<T>& b, WeightSchedule sched = {}, CpaGrads<T>* grads = nullptr) {
  return cpa_loss(b, cpa_coefficients(b, sched), grads);
}

// ---------------------------------------------------------------------------
// CGA

template <typename T>
struct CgaGrads {
  std::vector<T> he;
  Matrix<T> ihc;
  Matrix<T> negatives;
};

// Mean over IHC stains c of InfoNCE(e, e_c+, e-).
template <typename T>
T cga_loss(std::span<const T> he, const Matrix<T>& ihc, const Matrix<T>& negatives, T tau,
           CgaGrads<T>* grads = nullptr) {
  require(ihc.rows > 0, "cga: at least one IHC embedding required");
  require(tau > T(0), "cga: tau must be positive");
  require(ihc.cols == he.size(), "cga: embedding width mismatch");
  const T inv_c = T(1) / static_cast<T>(ihc.rows);
  if (grads != nullptr) {
    grads->he.assign(he.size(), T(0));
    grads->ihc = zeros_like(ihc);
    grads->negatives = zeros_like(negatives);
  }
  T loss = T(0);
  InfoNceGrads<T> g;
  for (std::size_t c = 0; c < ihc.rows; ++c) {
    loss += inv_c * info_nce<T>(he, ihc.row(c), negatives, tau, grads != nullptr ? &g : nullptr);
    if (grads == nullptr) continue;
    axpy<T>(inv_c, g.anchor, grads->he);
    axpy<T>(inv_c, g.positive, grads->ihc.row(c));
    axpy<T>(inv_c, std::span<const T>(g.negatives.data), std::span<T>(grads->negatives.data));
  }
  return loss;
}

}  // namespace xstain
