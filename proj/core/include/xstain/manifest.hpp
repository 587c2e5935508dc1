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

// Dataset manifest:
//   {"require_ihc": bool (optional, default true),
//    "cases": [{"case_id": str, "bags": {"HE": "rel/path.cseb", ...},
//               "label": 0|1 (optional), "survival": {"time": >0, "event": bool} (optional)}]}
// Bag paths are relative to the manifest's directory.

#pragma once

#include <filesystem>
#include <optional>

#include "xstain/bag.hpp"

namespace xstain {

// Reads every referenced bag and checks the alignment invariants. The
// override, when set, replaces the manifest's own require_ihc flag.
CaseSet load_manifest(const std::filesystem::path& path, std::optional<bool> require_ihc = std::nullopt);

// Writes one .cseb per (case, stain) and a manifest.json into dir. Returns
// the manifest path.
std::filesystem::path write_dataset(const CaseSet& set, const std::filesystem::path& dir, bool require_ihc = true);

}  // namespace xstain
