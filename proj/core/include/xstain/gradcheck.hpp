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

#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xstain/error.hpp"

namespace xstain {

// A parameter block under test: live values (perturbed in place) and the
// analytic gradient computed at the unperturbed point.
struct GradProbe {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

inline constexpr double kGradCheckFloor = 1e-8;

// Central-difference check. Relative error of one entry is
// |analytic - numeric| / max(|numeric|, 1e-8).
inline GradCheckResult grad_check(const std::function<double()>& f, const std::vector<GradProbe>& probes,
                                  double eps = 1e-4) {
  require(eps > 0.0, "grad_check: eps must be positive");
  GradCheckResult res;
  for (const auto& p : probes) {
    require(p.values.size() == p.analytic.size(), "grad_check: gradient length mismatch for " + p.name);
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double orig = p.values[i];
      p.values[i] = orig + eps;
      const double fp = f();
      p.values[i] = orig - eps;
      const double fm = f();
      p.values[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) fail(ErrorKind::kNumeric, "grad_check: non-finite f at " + p.name);
      const double numeric = (fp - fm) / (2.0 * eps);
      const double rel = std::abs(p.analytic[i] - numeric) / std::max(std::abs(numeric), kGradCheckFloor);
      if (rel > res.max_rel_error || res.worst_tensor.empty()) {
        res.max_rel_error = rel;
        res.worst_tensor = p.name;
        res.worst_index = i;
        res.worst_analytic = p.analytic[i];
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace xstain
