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

// Finite-difference gradient suites over random small shapes, 64-bit.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xstain/gradcheck.hpp"

namespace xstain {

struct SuiteResult {
  std::string name;
  int trials = 0;
  double tolerance = 0.0;
  GradCheckResult worst;  // over all trials
  std::uint64_t worst_seed = 0;
  bool passed() const { return worst.max_rel_error < tolerance; }
};

inline constexpr double kSuiteTolerance = 1e-5;

// Each trial draws its shapes and values from mix_seed(base_seed, trial).
SuiteResult gradcheck_primitives(int trials, std::uint64_t base_seed = 0, double eps = 1e-4);
SuiteResult gradcheck_adapter(int trials, std::uint64_t base_seed = 0, double eps = 1e-4);
SuiteResult gradcheck_caf(int trials, std::uint64_t base_seed = 0, double eps = 1e-4);
SuiteResult gradcheck_mil(int trials, std::uint64_t base_seed = 0, double eps = 1e-4);
SuiteResult gradcheck_cpa(int trials, std::uint64_t base_seed = 0, double eps = 1e-4);
SuiteResult gradcheck_cga(int trials, std::uint64_t base_seed = 0, double eps = 1e-4);

std::vector<SuiteResult> run_all_gradchecks(int trials, std::uint64_t base_seed = 0, double eps = 1e-4);

nlohmann::json to_json(const SuiteResult& r);

}  // namespace xstain
