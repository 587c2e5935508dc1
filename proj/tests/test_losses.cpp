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

#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "xstain/gradcheck.hpp"
#include "xstain/losses.hpp"
#include "xstain/oracles.hpp"

using namespace xstain;
using xstain::testing::randn;
using Mat = Matrix<double>;

namespace {

using LD = long double;

// Reference InfoNCE straight from the definition, no max-subtraction.
LD ref_info_nce(LD s_pos, const std::vector<LD>& s_neg, LD tau) {
  LD denom = std::exp(s_pos / tau);
  for (LD s : s_neg) denom += std::exp(s / tau);
  return -std::log(std::exp(s_pos / tau) / denom);
}

LD ref_cos(std::span<const double> a, std::span<const double> b) {
  LD ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<LD>(a[i]) * b[i];
    aa += static_cast<LD>(a[i]) * a[i];
    bb += static_cast<LD>(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

Mat unit_rows(Mat m) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double n = norm2<double>(m.row(i));
    for (auto& v : m.row(i)) v /= n;
  }
  return m;
}

// K anchors, C stains, pool of P rows, every anchor sees every pool row.
ContrastiveBatch<double> random_batch(Rng& rng, std::size_t K, std::size_t C, std::size_t P, std::size_t D) {
  ContrastiveBatch<double> b;
  b.anchors = randn(K, D, rng);
  for (std::size_t c = 0; c < C; ++c) b.positives.push_back(randn(K, D, rng));
  b.negative_pool = randn(P, D, rng);
  b.negatives.assign(K, {});
  for (std::size_t k = 0; k < K; ++k)
    for (std::uint32_t p = 0; p < P; ++p) b.negatives[k].push_back(p);
  return b;
}

}  // namespace

TEST_CASE("uniform logits give log(N+1)") {
  for (int n : {1, 3, 7}) {
    for (double tau : {0.07, 0.5, 1.0}) {
      const std::vector<double> neg(n, 0.3);
      CHECK(std::abs(info_nce_from_scores<double>(0.3, neg, tau) - std::log(n + 1.0)) < 1e-9);
    }
    // Same via vectors: positive and negatives identical to the anchor.
    const std::vector<double> a = {0.6, -0.8, 0.0};
    Mat negs(n, 3);
    for (int i = 0; i < n; ++i) std::copy(a.begin(), a.end(), negs.row(i).begin());
    CHECK(std::abs(info_nce<double>(a, a, negs, 0.07) - std::log(n + 1.0)) < 1e-9);
  }
  CHECK(std::abs(info_nce_from_scores<double>(0.3, std::vector<double>(3, 0.3), 0.2) - 1.386294) < 1e-6);
}

TEST_CASE("info_nce special cases") {
  CHECK(info_nce_from_scores<double>(0.5, {}, 0.07) == 0.0);
  const std::vector<double> a = {1, 2};
  CHECK(info_nce<double>(a, a, Mat(0, 2), 0.1) == 0.0);

  const std::vector<double> neg = {0.1, -0.2};
  const LD ref = ref_info_nce(0.9L, {0.1L, -0.2L}, 0.07L);
  CHECK(std::abs(info_nce_from_scores<double>(0.9, neg, 0.07) - static_cast<double>(ref)) < 1e-6);

  CHECK_THROWS_AS(info_nce_from_scores<double>(0.9, neg, 0.0), Error);
  CHECK_THROWS_AS(info_nce_from_scores<double>(0.9, neg, -0.1), Error);
  CHECK_THROWS_AS(info_nce<double>(std::vector<double>{}, std::vector<double>{}, Mat(0, 0), 0.1), Error);
}

TEST_CASE("info_nce is nonnegative and monotone in its scores") {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(8);
    const double tau = rng.uniform(0.05, 1.0);
    const double sp = rng.uniform(-1, 1);
    std::vector<double> sn(n);
    for (auto& s : sn) s = rng.uniform(-1, 1);
    const double base = info_nce_from_scores<double>(sp, sn, tau);
    CHECK(base >= 0.0);
    CHECK(info_nce_from_scores<double>(sp + 1e-2, sn, tau) < base);
    CHECK(info_nce_from_scores<double>(sp - 1e-2, sn, tau) > base);
    const std::size_t j = rng.below(n);
    auto up = sn;
    up[j] += 1e-2;
    CHECK(info_nce_from_scores<double>(sp, up, tau) > base);
  }
  // Vanishes as s+/tau grows.
  const std::vector<double> sn = {0.0, 0.0};
  CHECK(info_nce_from_scores<double>(1.0, sn, 0.01) < 1e-40);
}

TEST_CASE("adaptive weight") {
  for (double c : {-1.0, -0.3, 0.0, 0.7, 1.0}) CHECK(adaptive_weight(0, 100, c) == 1.0);
  CHECK(adaptive_weight(100, 100, 1.0) == 1.0);
  CHECK(adaptive_weight(50, 100, 0.5) == doctest::Approx(0.875).epsilon(1e-15));
  CHECK(std::abs(adaptive_weight(50, 100, 0.5) - (0.5 + 0.5 * 0.75)) < 1e-15);
  CHECK_THROWS_AS(adaptive_weight(0, 0, 0.5), Error);
  CHECK_THROWS_AS(adaptive_weight(5, 4, 0.5), Error);

  Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    const std::int64_t T = 1 + static_cast<std::int64_t>(rng.below(1000));
    const std::int64_t t = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(T) + 1));
    const double c1 = rng.uniform(-1, 1), c2 = rng.uniform(-1, 1);
    const double w1 = adaptive_weight(t, T, c1), w2 = adaptive_weight(t, T, c2);
    const double lo = 1.0 - static_cast<double>(t) / static_cast<double>(T);
    CHECK(w1 >= lo - 1e-15);
    CHECK(w1 <= 1.0 + 1e-15);
    if (c1 <= c2) CHECK(w1 <= w2);
  }

  WeightSchedule alt{ScheduleRamp::kCosine, SimilarityMap::kClampedPositive};
  CHECK(adaptive_weight(0, 10, -0.5, alt) == 1.0);
  CHECK(adaptive_weight(10, 10, 1.0, alt) == 1.0);
  CHECK(adaptive_weight(10, 10, -0.5, alt) == 0.0);
}

TEST_CASE("cpa coefficients sum to one per stain") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    auto b = random_batch(rng, 1 + rng.below(6), 1 + rng.below(4), 3, 5);
    b.total = 40;
    b.t = static_cast<std::int64_t>(rng.below(41));
    if (trial % 3 == 0) {
      b.present.assign(b.positives.size(), std::vector<std::uint8_t>(b.anchors.rows, 1));
      b.present[0][0] = 0;
    }
    const Mat coef = cpa_coefficients(b);
    for (std::size_t c = 0; c < coef.rows; ++c) {
      double s = 0.0;
      bool any = false;
      for (std::size_t k = 0; k < coef.cols; ++k) {
        s += coef(c, k);
        any = any || b.has(c, k);
        if (!b.has(c, k)) CHECK(coef(c, k) == 0.0);
      }
      if (any) CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("cpa at t=0 is the unweighted per-stain mean") {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    auto b = random_batch(rng, 2 + rng.below(5), 1 + rng.below(4), 4, 6);
    b.t = 0;
    b.total = 100;
    b.tau = 0.07;
    LD expected = 0;
    for (std::size_t c = 0; c < b.positives.size(); ++c) {
      LD stain_sum = 0;
      for (std::size_t k = 0; k < b.anchors.rows; ++k) {
        std::vector<LD> sn;
        for (auto p : b.negatives[k]) sn.push_back(ref_cos(b.anchors.row(k), b.negative_pool.row(p)));
        stain_sum += ref_info_nce(ref_cos(b.anchors.row(k), b.positives[c].row(k)), sn, b.tau);
      }
      expected += stain_sum / static_cast<LD>(b.anchors.rows);
    }
    CHECK(std::abs(cpa_loss(b) - static_cast<double>(expected)) < 1e-6);
  }
}

TEST_CASE("cpa with one anchor and one stain is info_nce") {
  Rng rng(4);
  auto b = random_batch(rng, 1, 1, 5, 7);
  b.t = 3;
  b.total = 7;
  CHECK(cpa_coefficients(b)(0, 0) == 1.0);
  CHECK(std::abs(cpa_loss(b) - info_nce<double>(b.anchors.row(0), b.positives[0].row(0), b.negative_pool, b.tau)) <
        1e-12);
}

TEST_CASE("cpa matches direct summation at t=T/2") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    ContrastiveBatch<double> b;
    const std::size_t K = 4, C = 2, D = 6;
    b.anchors = unit_rows(randn(K, D, rng));
    for (std::size_t c = 0; c < C; ++c) b.positives.push_back(unit_rows(randn(K, D, rng)));
    b.negative_pool = unit_rows(randn(9, D, rng));
    b.negatives.assign(K, {});
    // Ragged negative lists.
    for (std::size_t k = 0; k < K; ++k)
      for (std::uint32_t p = 0; p < 9; ++p)
        if ((p + k) % 3 != 0) b.negatives[k].push_back(p);
    b.tau = 0.07;
    b.total = 200;
    b.t = 100;

    LD expected = 0;
    for (std::size_t c = 0; c < C; ++c) {
      std::vector<LD> w(K);
      LD W = 0;
      for (std::size_t k = 0; k < K; ++k) {
        const LD cs = ref_cos(b.anchors.row(k), b.positives[c].row(k));
        w[k] = 0.5L + 0.5L * (1 + cs) / 2;
        W += w[k];
      }
      for (std::size_t k = 0; k < K; ++k) {
        std::vector<LD> sn;
        for (auto p : b.negatives[k]) sn.push_back(ref_cos(b.anchors.row(k), b.negative_pool.row(p)));
        expected += w[k] / W * ref_info_nce(ref_cos(b.anchors.row(k), b.positives[c].row(k)), sn, b.tau);
      }
    }
    CHECK(std::abs(cpa_loss(b) - static_cast<double>(expected)) < 1e-6);
  }
}

TEST_CASE("cpa rejects invalid batches") {
  Rng rng(1);
  auto b = random_batch(rng, 2, 1, 2, 3);
  auto bad = b;
  bad.positives.clear();
  CHECK_THROWS_AS(cpa_loss(bad), Error);
  bad = b;
  bad.tau = 0;
  CHECK_THROWS_AS(cpa_loss(bad), Error);
  bad = b;
  bad.t = 2;
  bad.total = 1;
  CHECK_THROWS_AS(cpa_loss(bad), Error);
  bad = b;
  bad.negatives[0].push_back(99);
  CHECK_THROWS_AS(cpa_loss(bad), Error);

  // t = T with every positive antipodal: all weights vanish.
  bad = b;
  bad.positives[0] = ops::scale(b.anchors, -1.0);
  bad.t = bad.total = 10;
  CHECK_THROWS_AS(cpa_loss(bad), Error);
}

TEST_CASE("cga closed forms") {
  const std::size_t N = 5;
  const double tau = 0.07;
  Mat ihc(3, 4);
  const std::vector<double> e = {1, 0, 0, 0};
  for (std::size_t c = 0; c < 3; ++c) std::copy(e.begin(), e.end(), ihc.row(c).begin());
  Mat negs(N, 4);
  Rng rng(2);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t j = 1; j < 4; ++j) negs(n, j) = rng.normal();
  const LD closed = -std::log(std::exp(1.0L / tau) / (std::exp(1.0L / tau) + N));
  CHECK(std::abs(cga_loss<double>(e, ihc, negs, tau) - static_cast<double>(closed)) < 1e-6);

  // C = 1, positive scored like every negative.
  Mat one(1, 4);
  std::copy(e.begin(), e.end(), one.row(0).begin());
  Mat same(3, 4);
  for (std::size_t n = 0; n < 3; ++n) same(n, 0) = 2.0;
  CHECK(std::abs(cga_loss<double>(e, one, same, 0.5) - std::log(4.0)) < 1e-9);

  CHECK_THROWS_AS(cga_loss<double>(e, Mat(0, 4), negs, tau), Error);
  CHECK_THROWS_AS(cga_loss<double>(e, ihc, negs, 0.0), Error);
}

TEST_CASE("losses are invariant to positive rescaling of raw inputs") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto b = random_batch(rng, 3, 2, 4, 5);
    b.t = 5;
    b.total = 10;
    const double base = cpa_loss(b);
    auto s = b;
    s.anchors = ops::scale(s.anchors, rng.uniform(0.1, 10.0));
    s.positives[1] = ops::scale(s.positives[1], rng.uniform(0.1, 10.0));
    s.negative_pool = ops::scale(s.negative_pool, rng.uniform(0.1, 10.0));
    CHECK(std::abs(cpa_loss(s) - base) < 1e-6);

    const Mat he = randn(1, 5, rng), ihc = randn(2, 5, rng), negs = randn(3, 5, rng);
    const double g = cga_loss<double>(he.data, ihc, negs, 0.1);
    const Mat he2 = ops::scale(he, 7.5), negs2 = ops::scale(negs, 0.2);
    CHECK(std::abs(cga_loss<double>(he2.data, ihc, negs2, 0.1) - g) < 1e-6);
  }
}

TEST_CASE("info_nce gradients match finite differences") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.below(5);
    Mat a = randn(1, d, rng), p = randn(1, d, rng), n = randn(1 + rng.below(4), d, rng);
    const double tau = rng.uniform(0.2, 1.0);
    InfoNceGrads<double> g;
    info_nce<double>(a.data, p.data, n, tau, &g);
    const auto r = grad_check([&] { return info_nce<double>(a.data, p.data, n, tau); },
                              {{"a", a.data, g.anchor}, {"p", p.data, g.positive}, {"n", n.data, g.negatives.data}});
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("cpa and cga gradients pass the oracle suites") {
  const auto cpa = gradcheck_cpa(20, 0);
  const auto cga = gradcheck_cga(20, 0);
  INFO("cpa " << cpa.worst.max_rel_error << " cga " << cga.worst.max_rel_error);
  CHECK(cpa.passed());
  CHECK(cga.passed());
}
