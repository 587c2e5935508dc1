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

#include "xstain/oracles.hpp"

#include "xstain/adapter.hpp"
#include "xstain/caf.hpp"
#include "xstain/losses.hpp"
#include "xstain/mil.hpp"
#include "xstain/ops.hpp"
#include "xstain/rng.hpp"

namespace xstain {

namespace {

using Mat = Matrix<double>;

Mat random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  fill_normal(m, rng, scale);
  return m;
}

std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

double weighted_sum(const Mat& a, const Mat& r) { return dot<double>(a.data, r.data); }

GradProbe probe(const std::string& name, Mat& values, const Mat& grad) { return {name, values.data, grad.data}; }

template <typename P>
void add_param_probes(std::vector<GradProbe>& out, P& params, const P& grads) {
  std::vector<const Mat*> gs;
  grads.visit([&](std::string_view, const Mat& m, int) { gs.push_back(&m); });
  std::size_t i = 0;
  params.visit([&](std::string_view name, Mat& m, int) { out.push_back(probe(std::string(name), m, *gs[i++])); });
}

template <typename Trial>
SuiteResult run_suite(const std::string& name, int trials, std::uint64_t base_seed, Trial&& trial) {
  SuiteResult res;
  res.name = name;
  res.trials = trials;
  res.tolerance = kSuiteTolerance;
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t seed = mix_seed(base_seed, static_cast<std::uint64_t>(t));
    Rng rng(seed);
    const GradCheckResult r = trial(rng);
    if (t == 0 || r.max_rel_error > res.worst.max_rel_error) {
      res.worst = r;
      res.worst_seed = seed;
    }
  }
  return res;
}

}  // namespace

SuiteResult gradcheck_primitives(int trials, std::uint64_t base_seed, double eps) {
  return run_suite("primitives", trials, base_seed, [&](Rng& rng) {
    const std::size_t n = draw(rng, 1, 4), d = draw(rng, 1, 4), e = draw(rng, 1, 4);
    Mat x = random_matrix(n, d, rng), w = random_matrix(d, e, rng), u = random_matrix(d, e, rng);
    Mat b = random_matrix(1, e, rng);
    const Mat r = random_matrix(1, 2 * e, rng);
    const Mat q = random_matrix(1, 2 * e, rng);
    const double s = 0.7, tau = 0.9;

    struct Fwd {
      Mat a, sg, p, cat, nrm, m;
      std::vector<double> norms;
      double f;
    };
    auto forward = [&]() {
      Fwd o;
      o.a = ops::tanh(ops::add_bias(ops::matmul(x, w), b));
      o.sg = ops::sigmoid(ops::matmul(x, u));
      o.p = ops::softmax_rows(ops::scale(ops::hadamard(o.a, o.sg), s), tau);
      o.cat = ops::concat_cols<double>({o.p, o.a});
      o.nrm = ops::l2_normalize_rows(o.cat, &o.norms);
      o.m = ops::mean_rows(o.nrm);
      o.f = weighted_sum(o.m, r) + ops::cosine_similarity<double>(o.m.data, q.data);
      return o;
    };

    const Fwd o = forward();
    Mat gm = r;
    ops::cosine_similarity_backward<double>(o.m.data, q.data, 1.0, gm.data, {});
    Mat gn = zeros_like(o.nrm);
    ops::mean_rows_backward(gm, gn);
    Mat gcat = zeros_like(o.cat);
    ops::l2_normalize_rows_backward(o.nrm, o.norms, gn, gcat);
    std::vector<Mat> gparts = {zeros_like(o.p), zeros_like(o.a)};
    ops::concat_cols_backward(gcat, gparts);
    Mat gh = zeros_like(o.p);
    ops::softmax_rows_backward(o.p, gparts[0], tau, gh);
    Mat gg = zeros_like(o.p);
    ops::scale_backward(gh, s, gg);
    Mat ga = gparts[1], gsg = zeros_like(o.sg);
    ops::hadamard_backward(o.a, o.sg, gg, &ga, &gsg);
    Mat gxu = zeros_like(o.sg), gy = zeros_like(o.a), gxw = zeros_like(o.a);
    ops::sigmoid_backward(o.sg, gsg, gxu);
    ops::tanh_backward(o.a, ga, gy);
    Mat gx = zeros_like(x), gw = zeros_like(w), gu = zeros_like(u), gb = zeros_like(b);
    ops::add_bias_backward(gy, &gxw, &gb);
    ops::matmul_backward(x, w, gxw, &gx, &gw);
    ops::matmul_backward(x, u, gxu, &gx, &gu);

    return grad_check([&] { return forward().f; },
                      {probe("x", x, gx), probe("w", w, gw), probe("u", u, gu), probe("b", b, gb)}, eps);
  });
}

SuiteResult gradcheck_adapter(int trials, std::uint64_t base_seed, double eps) {
  return run_suite("adapter", trials, base_seed, [&](Rng& rng) {
    const std::size_t n = draw(rng, 1, 4), d = draw(rng, 1, 5), dh = draw(rng, 1, 5);
    auto p = make_adapter<double>(d, dh);
    p.visit([&](std::string_view, Mat& m, int) { fill_normal(m, rng, 0.5); });
    Mat x = random_matrix(n, d, rng);
    const Mat r = random_matrix(n, d, rng);
    AdapterCache<double> cache;
    adapter_forward(x, p, &cache);
    auto g = zeros_like_params(p);
    Mat gx = zeros_like(x);
    adapter_backward(cache, p, r, g, &gx);
    std::vector<GradProbe> probes = {probe("x", x, gx)};
    add_param_probes(probes, p, g);
    return grad_check([&] { return weighted_sum(adapter_forward(x, p), r); }, probes, eps);
  });
}

SuiteResult gradcheck_caf(int trials, std::uint64_t base_seed, double eps) {
  return run_suite("caf", trials, base_seed, [&](Rng& rng) {
    const std::size_t m = draw(rng, 2, 4), n = draw(rng, 1, 3), heads = draw(rng, 1, 3), dk = draw(rng, 1, 3);
    const std::size_t d = heads * dk;
    auto p = make_caf<double>(d, heads);
    p.visit([&](std::string_view, Mat& w, int) { fill_normal(w, rng, 0.5); });
    std::vector<Mat> stains;
    for (std::size_t s = 0; s < m; ++s) stains.push_back(random_matrix(n, d, rng));
    const Mat r = random_matrix(n, d, rng);
    auto g = zeros_like_params(p);
    caf_backward(stains, p, r, g);
    std::vector<GradProbe> probes;
    add_param_probes(probes, p, g);
    return grad_check([&] { return weighted_sum(caf_fuse(stains, p), r); }, probes, eps);
  });
}

SuiteResult gradcheck_mil(int trials, std::uint64_t base_seed, double eps) {
  return run_suite("mil", trials, base_seed, [&](Rng& rng) {
    const std::size_t n = draw(rng, 1, 5), d = draw(rng, 1, 5), l = draw(rng, 1, 4);
    auto p = make_mil<double>(d, l);
    p.visit([&](std::string_view, Mat& w, int) { fill_normal(w, rng, 0.7); });
    Mat z = random_matrix(n, d, rng);
    const Mat r = random_matrix(1, d, rng);
    MilCache<double> cache;
    mil_aggregate(z, p, &cache);
    auto g = zeros_like_params(p);
    Mat gz = zeros_like(z);
    mil_backward(cache, p, r, g, &gz);
    std::vector<GradProbe> probes = {probe("z", z, gz)};
    add_param_probes(probes, p, g);
    return grad_check([&] { return weighted_sum(mil_aggregate(z, p), r); }, probes, eps);
  });
}

SuiteResult gradcheck_cpa(int trials, std::uint64_t base_seed, double eps) {
  return run_suite("cpa", trials, base_seed, [&](Rng& rng) {
    const std::size_t k = draw(rng, 1, 4), d = draw(rng, 2, 5), c = draw(rng, 1, 3), pool = draw(rng, 1, 6);
    ContrastiveBatch<double> b;
    b.tau = 0.5;
    b.total = static_cast<std::int64_t>(draw(rng, 1, 10));
    b.t = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(b.total) + 1));
    b.anchors = random_matrix(k, d, rng);
    for (std::size_t s = 0; s < c; ++s) b.positives.push_back(random_matrix(k, d, rng));
    b.present.assign(c, std::vector<std::uint8_t>(k, 1));
    for (std::size_t s = 0; s < c; ++s)
      for (std::size_t a = 1; a < k; ++a) b.present[s][a] = rng.uniform() < 0.75 ? 1 : 0;
    b.negative_pool = random_matrix(pool, d, rng);
    for (std::size_t a = 0; a < k; ++a) {
      const auto take = static_cast<std::uint32_t>(draw(rng, 1, pool));
      b.negatives.push_back(rng.sample_without_replacement(static_cast<std::uint32_t>(pool), take));
    }
    const Mat coef = cpa_coefficients(b);
    CpaGrads<double> g;
    cpa_loss(b, coef, &g);
    std::vector<GradProbe> probes = {probe("anchors", b.anchors, g.anchors),
                                     probe("negative_pool", b.negative_pool, g.negative_pool)};
    for (std::size_t s = 0; s < c; ++s) probes.push_back(probe("positives." + std::to_string(s), b.positives[s], g.positives[s]));
    return grad_check([&] { return cpa_loss(b, coef); }, probes, eps);
  });
}

SuiteResult gradcheck_cga(int trials, std::uint64_t base_seed, double eps) {
  return run_suite("cga", trials, base_seed, [&](Rng& rng) {
    const std::size_t d = draw(rng, 2, 5), c = draw(rng, 1, 4), nn = draw(rng, 1, 5);
    Mat he = random_matrix(1, d, rng), ihc = random_matrix(c, d, rng), negs = random_matrix(nn, d, rng);
    const double tau = 0.5;
    CgaGrads<double> g;
    cga_loss<double>(he.data, ihc, negs, tau, &g);
    const Mat ghe = Mat::row_vector(g.he);
    return grad_check([&] { return cga_loss<double>(he.data, ihc, negs, tau); },
                      {probe("he", he, ghe), probe("ihc", ihc, g.ihc), probe("negatives", negs, g.negatives)}, eps);
  });
}

std::vector<SuiteResult> run_all_gradchecks(int trials, std::uint64_t base_seed, double eps) {
  return {gradcheck_primitives(trials, base_seed, eps), gradcheck_adapter(trials, base_seed, eps),
          gradcheck_caf(trials, base_seed, eps),        gradcheck_mil(trials, base_seed, eps),
          gradcheck_cpa(trials, base_seed, eps),        gradcheck_cga(trials, base_seed, eps)};
}

nlohmann::json to_json(const SuiteResult& r) {
  return {{"suite", r.name},
          {"trials", r.trials},
          {"tolerance", r.tolerance},
          {"max_rel_error", r.worst.max_rel_error},
          {"worst_tensor", r.worst.worst_tensor},
          {"worst_index", r.worst.worst_index},
          {"worst_seed", r.worst_seed},
          {"passed", r.passed()}};
}

}  // namespace xstain
