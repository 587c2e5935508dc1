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

#include <functional>

#include "test_util.hpp"
#include "xstain/gradcheck.hpp"
#include "xstain/ops.hpp"

using namespace xstain;
using xstain::testing::randn;
using Mat = Matrix<double>;

namespace {

constexpr int kTrials = 20;
constexpr double kPrimitiveTol = 1e-6;

std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

double wsum(const Mat& a, const Mat& r) { return dot<double>(a.data, r.data); }

// f = <R, op(inputs)>; backward receives R and fills the input gradients.
void check_primitive(const char* name, const std::function<double(Rng&)>& trial) {
  double worst = 0.0;
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(mix_seed(1234, static_cast<std::uint64_t>(t)));
    worst = std::max(worst, trial(rng));
  }
  INFO(name << " worst relative error " << worst);
  CHECK(worst < kPrimitiveTol);
}

}  // namespace

TEST_CASE("softmax examples") {
  const std::vector<double> zeros = {0, 0, 0};
  for (double p : ops::softmax<double>(zeros)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const std::vector<double> big = {1000, 0};
  const auto y = ops::softmax<double>(big);
  CHECK(std::isfinite(y[0]));
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] < 1e-300);

  // Two-way softmax is the logistic of the logit difference.
  const std::vector<double> v = {0.7071, 0};
  const double p0 = 1.0 / (1.0 + std::exp(-0.7071L));
  const auto s = ops::softmax<double>(v);
  CHECK(std::abs(s[0] - p0) < 1e-12);
  CHECK(std::abs(s[1] - (1.0 - p0)) < 1e-12);
  CHECK(s[0] == doctest::Approx(0.6698).epsilon(1e-4));
  CHECK(s[1] == doctest::Approx(0.3302).epsilon(1e-4));

  CHECK_THROWS_AS(ops::softmax<double>(v, 0.0), Error);
  CHECK_THROWS_AS(ops::softmax<double>(v, -1.0), Error);
}

TEST_CASE("softmax sums to one and ignores a constant shift") {
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = draw(rng, 1, 12);
    std::vector<double> v(n);
    // Multiples of 1/8 keep every shifted difference exact.
    for (auto& x : v) x = static_cast<double>(static_cast<int>(rng.below(161)) - 80) / 8.0;
    const double tau = t % 2 ? 1.0 : 0.5;
    const auto y = ops::softmax<double>(v, tau);
    double sum = 0.0;
    for (double p : y) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);

    auto shifted = v;
    for (auto& x : shifted) x += 12.5;
    CHECK(ops::softmax<double>(shifted, tau) == y);

    std::vector<float> vf(v.begin(), v.end()), sf(shifted.begin(), shifted.end());
    for (auto& x : vf) x += static_cast<float>(rng.uniform());
    for (std::size_t i = 0; i < n; ++i) sf[i] = vf[i] + 3.3f;
    const auto a = ops::softmax<float>(vf), b = ops::softmax<float>(sf);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-6f);
  }
}

TEST_CASE("cosine similarity examples") {
  const std::vector<double> a = {3, 4};
  CHECK(ops::cosine_similarity<double>(a, a) == 1.0);
  const std::vector<double> e1 = {1, 0}, e2 = {0, 1};
  CHECK(ops::cosine_similarity<double>(e1, e2) == 0.0);
  const std::vector<double> p = {1, 2}, q = {2, 1};
  const double oracle = 4.0 / (std::sqrt(5.0) * std::sqrt(5.0));
  CHECK(ops::cosine_similarity<double>(p, q) == doctest::Approx(oracle).epsilon(1e-15));
  CHECK(ops::cosine_similarity<double>(p, q) == doctest::Approx(0.8).epsilon(1e-15));
  const std::vector<double> z = {0, 0};
  CHECK_THROWS_AS(ops::cosine_similarity<double>(z, p), Error);
  CHECK_THROWS_AS(ops::cosine_similarity<double>(p, z), Error);
}

TEST_CASE("l2 normalize gives unit rows and is idempotent") {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const Mat x = randn(draw(rng, 1, 5), draw(rng, 1, 7), rng, 3.0);
    const Mat y = ops::l2_normalize_rows(x);
    for (std::size_t i = 0; i < y.rows; ++i) CHECK(std::abs(norm2<double>(y.row(i)) - 1.0) < 1e-6);
    CHECK(xstain::testing::max_abs_diff(ops::l2_normalize_rows(y), y) < 1e-6);
  }
  CHECK_THROWS_AS(ops::l2_normalize_rows(Mat(1, 3)), Error);
}

TEST_CASE("reductions are repeatable") {
  Rng rng(3);
  const Mat a = randn(17, 33, rng), b = randn(33, 9, rng);
  CHECK(ops::matmul(a, b) == ops::matmul(a, b));
  CHECK(ops::mean_rows(a) == ops::mean_rows(a));
}

TEST_CASE("primitive reverse rules match finite differences") {
  check_primitive("matmul", [](Rng& rng) {
    Mat a = randn(draw(rng, 1, 4), draw(rng, 1, 4), rng);
    Mat b = randn(a.cols, draw(rng, 1, 4), rng);
    const Mat r = randn(a.rows, b.cols, rng);
    Mat ga = zeros_like(a), gb = zeros_like(b);
    ops::matmul_backward(a, b, r, &ga, &gb);
    return grad_check([&] { return wsum(ops::matmul(a, b), r); },
                      {{"a", a.data, ga.data}, {"b", b.data, gb.data}})
        .max_rel_error;
  });
  check_primitive("add_bias", [](Rng& rng) {
    Mat x = randn(draw(rng, 1, 4), draw(rng, 1, 4), rng);
    Mat b = randn(1, x.cols, rng);
    const Mat r = randn(x.rows, x.cols, rng);
    Mat gx = zeros_like(x), gb = zeros_like(b);
    ops::add_bias_backward(r, &gx, &gb);
    return grad_check([&] { return wsum(ops::add_bias(x, b), r); }, {{"x", x.data, gx.data}, {"b", b.data, gb.data}})
        .max_rel_error;
  });
  check_primitive("tanh", [](Rng& rng) {
    Mat x = randn(draw(rng, 1, 4), draw(rng, 1, 4), rng);
    const Mat r = randn(x.rows, x.cols, rng);
    Mat gx = zeros_like(x);
    ops::tanh_backward(ops::tanh(x), r, gx);
    return grad_check([&] { return wsum(ops::tanh(x), r); }, {{"x", x.data, gx.data}}).max_rel_error;
  });
  check_primitive("sigmoid", [](Rng& rng) {
    Mat x = randn(draw(rng, 1, 4), draw(rng, 1, 4), rng);
    const Mat r = randn(x.rows, x.cols, rng);
    Mat gx = zeros_like(x);
    ops::sigmoid_backward(ops::sigmoid(x), r, gx);
    return grad_check([&] { return wsum(ops::sigmoid(x), r); }, {{"x", x.data, gx.data}}).max_rel_error;
  });
  check_primitive("hadamard", [](Rng& rng) {
    Mat a = randn(draw(rng, 1, 4), draw(rng, 1, 4), rng), b = randn(a.rows, a.cols, rng);
    const Mat r = randn(a.rows, a.cols, rng);
    Mat ga = zeros_like(a), gb = zeros_like(b);
    ops::hadamard_backward(a, b, r, &ga, &gb);
    return grad_check([&] { return wsum(ops::hadamard(a, b), r); }, {{"a", a.data, ga.data}, {"b", b.data, gb.data}})
        .max_rel_error;
  });
  check_primitive("scale", [](Rng& rng) {
    Mat x = randn(draw(rng, 1, 4), draw(rng, 1, 4), rng);
    const double s = rng.uniform(-2.0, 2.0);
    const Mat r = randn(x.rows, x.cols, rng);
    Mat gx = zeros_like(x);
    ops::scale_backward(r, s, gx);
    return grad_check([&] { return wsum(ops::scale(x, s), r); }, {{"x", x.data, gx.data}}).max_rel_error;
  });
  check_primitive("softmax", [](Rng& rng) {
    Mat x = randn(draw(rng, 1, 4), draw(rng, 1, 5), rng);
    const double tau = rng.uniform(0.5, 2.0);
    const Mat r = randn(x.rows, x.cols, rng);
    Mat gx = zeros_like(x);
    ops::softmax_rows_backward(ops::softmax_rows(x, tau), r, tau, gx);
    return grad_check([&] { return wsum(ops::softmax_rows(x, tau), r); }, {{"x", x.data, gx.data}}).max_rel_error;
  });
  check_primitive("l2_normalize", [](Rng& rng) {
    Mat x = randn(draw(rng, 1, 4), draw(rng, 1, 5), rng);
    const Mat r = randn(x.rows, x.cols, rng);
    std::vector<double> norms;
    const Mat y = ops::l2_normalize_rows(x, &norms);
    Mat gx = zeros_like(x);
    ops::l2_normalize_rows_backward(y, norms, r, gx);
    return grad_check([&] { return wsum(ops::l2_normalize_rows(x), r); }, {{"x", x.data, gx.data}}).max_rel_error;
  });
  check_primitive("cosine_similarity", [](Rng& rng) {
    const std::size_t d = draw(rng, 2, 6);
    Mat a = randn(1, d, rng), b = randn(1, d, rng);
    Mat ga = zeros_like(a), gb = zeros_like(b);
    ops::cosine_similarity_backward<double>(a.data, b.data, 1.0, ga.data, gb.data);
    return grad_check([&] { return ops::cosine_similarity<double>(a.data, b.data); },
                      {{"a", a.data, ga.data}, {"b", b.data, gb.data}})
        .max_rel_error;
  });
  check_primitive("mean_rows", [](Rng& rng) {
    Mat x = randn(draw(rng, 1, 5), draw(rng, 1, 4), rng);
    const Mat r = randn(1, x.cols, rng);
    Mat gx = zeros_like(x);
    ops::mean_rows_backward(r, gx);
    return grad_check([&] { return wsum(ops::mean_rows(x), r); }, {{"x", x.data, gx.data}}).max_rel_error;
  });
  check_primitive("concat_cols", [](Rng& rng) {
    const std::size_t n = draw(rng, 1, 4);
    Mat a = randn(n, draw(rng, 1, 3), rng), b = randn(n, draw(rng, 1, 3), rng);
    const Mat r = randn(n, a.cols + b.cols, rng);
    std::vector<Mat> g = {zeros_like(a), zeros_like(b)};
    ops::concat_cols_backward(r, g);
    return grad_check([&] { return wsum(ops::concat_cols<double>({a, b}), r); },
                      {{"a", a.data, g[0].data}, {"b", b.data, g[1].data}})
        .max_rel_error;
  });
}
