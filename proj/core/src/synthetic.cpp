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

#include "xstain/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <set>

namespace xstain {

void validate(const SyntheticConfig& cfg) {
  require(cfg.n_cases >= 1, "synthetic: n_cases must be positive");
  require(cfg.n_patches >= 1, "synthetic: n_patches must be positive");
  require(cfg.dim_latent >= 1 && cfg.dim_embed >= 1, "synthetic: dimensions must be positive");
  require(cfg.dim_latent <= cfg.dim_embed, "synthetic: dim_latent must not exceed dim_embed");
  require(cfg.noise_sigma >= 0.0, "synthetic: noise_sigma must be nonnegative");
  require(cfg.censor_rate >= 0.0 && cfg.censor_rate < 1.0, "synthetic: censor_rate must be in [0, 1)");
  require(cfg.case_spread >= 0.0 && cfg.bias_scale >= 0.0, "synthetic: scales must be nonnegative");
  require(!cfg.identity_maps || cfg.dim_latent == cfg.dim_embed,
          "synthetic: identity_maps requires dim_latent == dim_embed");
}

Matrix<double> random_orthonormal(std::size_t dim, std::size_t k, Rng& rng) {
  require(k <= dim, "random_orthonormal: more columns than rows");
  Matrix<double> a(dim, k);
  for (auto& v : a.data) v = rng.normal();
  // Modified Gram-Schmidt, column by column. A Gaussian draw is full rank
  // with probability one; a degenerate column is redrawn.
  for (std::size_t j = 0; j < k; ++j) {
    for (;;) {
      for (std::size_t p = 0; p < j; ++p) {
        double proj = 0.0;
        for (std::size_t i = 0; i < dim; ++i) proj += a(i, p) * a(i, j);
        for (std::size_t i = 0; i < dim; ++i) a(i, j) -= proj * a(i, p);
      }
      double nrm = 0.0;
      for (std::size_t i = 0; i < dim; ++i) nrm += a(i, j) * a(i, j);
      nrm = std::sqrt(nrm);
      if (nrm > 1e-8) {
        for (std::size_t i = 0; i < dim; ++i) a(i, j) /= nrm;
        break;
      }
      for (std::size_t i = 0; i < dim; ++i) a(i, j) = rng.normal();
    }
  }
  return a;
}

CaseSet generate_synthetic(const SyntheticConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const std::size_t L = cfg.dim_latent, D = cfg.dim_embed, N = cfg.n_patches;

  std::vector<Matrix<double>> maps;
  std::vector<std::vector<double>> biases;
  for (std::size_t m = 0; m < kNumStains; ++m) {
    if (cfg.identity_maps) {
      Matrix<double> eye(D, L);
      for (std::size_t i = 0; i < D; ++i) eye(i, i) = 1.0;
      maps.push_back(std::move(eye));
    } else {
      maps.push_back(random_orthonormal(D, L, rng));
    }
    std::vector<double> b(D, 0.0);
    if (cfg.bias_scale > 0.0)
      for (auto& v : b) v = cfg.bias_scale * rng.normal() / std::sqrt(static_cast<double>(D));
    biases.push_back(std::move(b));
  }
  std::vector<double> w_surv(L);
  double wn = 0.0;
  for (auto& v : w_surv) {
    v = rng.normal();
    wn += v * v;
  }
  for (auto& v : w_surv) v /= std::sqrt(wn);

  // Square-ish grid of patch positions.
  const auto grid_w = static_cast<std::uint32_t>(std::ceil(std::sqrt(static_cast<double>(N))));
  std::vector<GridPos> coords(N);
  for (std::uint32_t i = 0; i < N; ++i) coords[i] = {i / grid_w, i % grid_w};

  CaseSet set;
  std::vector<int> labels;
  std::vector<Survival> survival;
  for (std::uint32_t ci = 0; ci < cfg.n_cases; ++ci) {
    char id[32];
    std::snprintf(id, sizeof id, "case%04u", ci);
    AlignedCase c;
    c.case_id = id;

    std::vector<double> mu(L);
    for (auto& v : mu) v = cfg.case_spread * rng.normal();
    Matrix<double> u(N, L);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t l = 0; l < L; ++l) u(i, l) = mu[l] + rng.normal();

    for (std::size_t m = 0; m < kNumStains; ++m) {
      PatchBag bag;
      bag.stain = static_cast<StainId>(m);
      bag.slide_id = c.case_id + "_" + std::string(stain_name(bag.stain));
      bag.coords = coords;
      bag.embeddings = Matrix<float>(N, D);
      for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t d = 0; d < D; ++d) {
          double v = biases[m][d];
          for (std::size_t l = 0; l < L; ++l) v += maps[m](d, l) * u(i, l);
          if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * rng.normal();
          bag.embeddings(i, d) = static_cast<float>(v);
        }
      }
      c.bags[bag.stain] = std::move(bag);
    }

    std::vector<double> mean(L, 0.0);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t l = 0; l < L; ++l) mean[l] += u(i, l);
    for (auto& v : mean) v /= static_cast<double>(N);
    labels.push_back(mean[0] > 0.0 ? 1 : 0);

    double risk = 0.0;
    for (std::size_t l = 0; l < L; ++l) risk += w_surv[l] * mean[l];
    const double t_true = std::exp(-risk + 0.25 * rng.normal());
    const bool censored = rng.uniform() < cfg.censor_rate;
    // A censored subject is last seen at a uniform fraction of its event time.
    const double t_obs = censored ? t_true * (1.0 - rng.uniform()) : t_true;
    survival.push_back({t_obs, !censored});
    set.cases.push_back(std::move(c));
  }
  set.labels = std::move(labels);
  set.survival = std::move(survival);
  return set;
}

void to_json(nlohmann::json& j, const SyntheticConfig& cfg) {
  j = nlohmann::json{{"n_cases", cfg.n_cases},         {"n_patches", cfg.n_patches},
                     {"dim_latent", cfg.dim_latent},   {"dim_embed", cfg.dim_embed},
                     {"noise_sigma", cfg.noise_sigma}, {"seed", cfg.seed},
                     {"censor_rate", cfg.censor_rate}, {"case_spread", cfg.case_spread},
                     {"bias_scale", cfg.bias_scale},   {"identity_maps", cfg.identity_maps}};
}

void from_json(const nlohmann::json& j, SyntheticConfig& cfg) {
  static const std::set<std::string> known = {"n_cases",     "n_patches",   "dim_latent", "dim_embed",
                                              "noise_sigma", "seed",        "censor_rate", "case_spread",
                                              "bias_scale",  "identity_maps"};
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) fail(ErrorKind::kFormat, "synthetic config: unknown key '" + k + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("n_cases", cfg.n_cases);
  get("n_patches", cfg.n_patches);
  get("dim_latent", cfg.dim_latent);
  get("dim_embed", cfg.dim_embed);
  get("noise_sigma", cfg.noise_sigma);
  get("seed", cfg.seed);
  get("censor_rate", cfg.censor_rate);
  get("case_spread", cfg.case_spread);
  get("bias_scale", cfg.bias_scale);
  get("identity_maps", cfg.identity_maps);
}

}  // namespace xstain
