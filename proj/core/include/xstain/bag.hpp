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

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xstain/tensor.hpp"

namespace xstain {

// HE is the anchor stain; the others are IHC.
enum class StainId : std::uint8_t { kHE = 0, kHER2 = 1, kKI67 = 2, kER = 3, kPGR = 4 };

inline constexpr std::size_t kNumStains = 5;
inline constexpr std::array<StainId, kNumStains> kAllStains = {StainId::kHE, StainId::kHER2, StainId::kKI67,
                                                               StainId::kER, StainId::kPGR};

std::string_view stain_name(StainId s);
std::optional<StainId> parse_stain(std::string_view name);
inline bool is_ihc(StainId s) { return s != StainId::kHE; }

struct GridPos {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  auto operator<=>(const GridPos&) const = default;
};

// One stain's patch embeddings for one slide.
struct PatchBag {
  std::string slide_id;
  StainId stain = StainId::kHE;
  std::vector<GridPos> coords;
  Matrix<float> embeddings;  // N x D

  std::size_t size() const { return embeddings.rows; }
  std::size_t dim() const { return embeddings.cols; }
  bool operator==(const PatchBag&) const = default;
};

// Throws Error naming the slide when an invariant is violated.
void validate_bag(const PatchBag& bag);

// Stain bags of one tissue sample; row i of every bag is the same location.
struct AlignedCase {
  std::string case_id;
  std::map<StainId, PatchBag> bags;

  bool has(StainId s) const { return bags.count(s) != 0; }
  const PatchBag& he() const;
  std::vector<StainId> ihc_stains() const;
  std::size_t num_patches() const { return he().size(); }
};

// Checks HE presence, equal N and identical coordinate sequences across
// stains; with require_ihc, also that at least one IHC bag exists.
void validate_case(const AlignedCase& c, bool require_ihc);

struct Survival {
  double time = 1.0;
  bool event = true;
  bool operator==(const Survival&) const = default;
};

struct CaseSet {
  std::vector<AlignedCase> cases;
  std::optional<std::vector<int>> labels;
  std::optional<std::vector<Survival>> survival;

  std::size_t size() const { return cases.size(); }
};

void validate_case_set(const CaseSet& set, bool require_ihc);

// ---------------------------------------------------------------------------
// .cseb binary format (little-endian):
//   "CSEB" | u16 version=1 | u8 stain | u8 pad | u16 id_len | id bytes |
//   u32 N | u32 D | N x (u32 row, u32 col) | N*D f32 row-major

inline constexpr std::uint16_t kBagVersion = 1;

std::vector<std::uint8_t> encode_bag(const PatchBag& bag);
PatchBag decode_bag(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");

// Validates before writing anything; returns the number of bytes written.
std::size_t write_bag(const PatchBag& bag, std::ostream& out);
PatchBag read_bag(std::istream& in, const std::string& origin = "<stream>");

std::size_t write_bag_file(const PatchBag& bag, const std::filesystem::path& path);
PatchBag read_bag_file(const std::filesystem::path& path);

}  // namespace xstain
