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

// Synthetic aligned multi-stain embedding bags.
//
// Per case, each patch position i draws a latent u_i = mu_case + xi_i with
// mu_case ~ N(0, case_spread^2 I) (zero by default) and xi_i ~ N(0, I).
// Stain m observes
//   row_m(i) = A_m u_i + b_m + noise_sigma * eps
// where A_m (dim_embed x dim_latent) has random orthonormal columns, so raw
// cross-stain similarity carries no alignment signal. The class label is
// 1[mean_i u_i[0] > 0]; survival time is exp(-<w_surv, mean_i u_i> + 0.25 n)
// with independent censoring at censor_rate.

#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>
#include "xstain/bag.hpp"
#include "xstain/rng.hpp"

namespace xstain {

struct SyntheticConfig {
  std::uint32_t n_cases = 32;
  std::uint32_t n_patches = 64;
  std::uint32_t dim_latent = 8;
  std::uint32_t dim_embed = 32;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
  double censor_rate = 0.25;
  double case_spread = 0.0;
  double bias_scale = 0.0;      // b_m ~ N(0, bias_scale^2 / dim_embed)
  bool identity_maps = false;   // debug: A_m = I (requires dim_latent == dim_embed)
};

void validate(const SyntheticConfig& cfg);

CaseSet generate_synthetic(const SyntheticConfig& cfg);

// Random dim x k matrix with orthonormal columns (Gram-Schmidt on Gaussian).
Matrix<double> random_orthonormal(std::size_t dim, std::size_t k, Rng& rng);

void to_json(nlohmann::json& j, const SyntheticConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, SyntheticConfig& cfg);

}  // namespace xstain
