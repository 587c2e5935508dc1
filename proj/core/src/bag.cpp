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

#include "xstain/bag.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "xstain/byteio.hpp"

namespace xstain {

namespace {

constexpr std::array<std::string_view, kNumStains> kStainNames = {"HE", "HER2", "KI67", "ER", "PGR"};

}  // namespace

std::string_view stain_name(StainId s) { return kStainNames[static_cast<std::size_t>(s)]; }

std::optional<StainId> parse_stain(std::string_view name) {
  for (std::size_t i = 0; i < kNumStains; ++i)
    if (kStainNames[i] == name) return static_cast<StainId>(i);
  // PR is a common alias for the progesterone receptor stain.
  if (name == "PR") return StainId::kPGR;
  return std::nullopt;
}

void validate_bag(const PatchBag& bag) {
  const std::string who = "bag '" + bag.slide_id + "' (" + std::string(stain_name(bag.stain)) + ")";
  require(bag.embeddings.rows >= 1, who + ": no patches");
  require(bag.embeddings.cols >= 1, who + ": zero embedding width");
  require(bag.coords.size() == bag.embeddings.rows, who + ": coords/embedding row count mismatch");
  std::set<GridPos> seen;
  for (const auto& c : bag.coords)
    if (!seen.insert(c).second)
      fail(ErrorKind::kFormat, who + ": duplicate coordinate (" + std::to_string(c.row) + "," +
                                   std::to_string(c.col) + ")");
  if (!all_finite(bag.embeddings)) fail(ErrorKind::kNumeric, who + ": non-finite embedding value");
}

const PatchBag& AlignedCase::he() const {
  auto it = bags.find(StainId::kHE);
  if (it == bags.end()) fail(ErrorKind::kAlignment, "case '" + case_id + "': missing HE bag");
  return it->second;
}

std::vector<StainId> AlignedCase::ihc_stains() const {
  std::vector<StainId> out;
  for (const auto& [s, _] : bags)
    if (is_ihc(s)) out.push_back(s);
  return out;
}

void validate_case(const AlignedCase& c, bool require_ihc) {
  const PatchBag& he = c.he();
  for (const auto& [stain, bag] : c.bags) {
    validate_bag(bag);
    const std::string who = "case '" + c.case_id + "' stain " + std::string(stain_name(stain));
    if (bag.stain != stain) fail(ErrorKind::kAlignment, who + ": bag file declares stain " +
                                                        std::string(stain_name(bag.stain)));
    if (bag.size() != he.size())
      fail(ErrorKind::kAlignment, who + ": " + std::to_string(bag.size()) + " patches, HE has " +
                                      std::to_string(he.size()));
    if (bag.dim() != he.dim())
      fail(ErrorKind::kAlignment, who + ": embedding width " + std::to_string(bag.dim()) + ", HE has " +
                                      std::to_string(he.dim()));
    if (bag.coords != he.coords) fail(ErrorKind::kAlignment, who + ": coordinates differ from HE");
  }
  if (require_ihc && c.ihc_stains().empty())
    fail(ErrorKind::kAlignment, "case '" + c.case_id + "': no IHC bag (required for training)");
}

void validate_case_set(const CaseSet& set, bool require_ihc) {
  std::set<std::string> ids;
  for (const auto& c : set.cases) {
    validate_case(c, require_ihc);
    if (!ids.insert(c.case_id).second) fail(ErrorKind::kFormat, "duplicate case id '" + c.case_id + "'");
  }
  if (set.labels) {
    require(set.labels->size() == set.size(), "labels must cover every case");
    for (int l : *set.labels) require(l == 0 || l == 1, "labels must be 0 or 1");
  }
  if (set.survival) {
    require(set.survival->size() == set.size(), "survival must cover every case");
    for (const auto& s : *set.survival) require(s.time > 0.0 && std::isfinite(s.time), "survival times must be positive");
  }
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_bag(const PatchBag& bag) {
  validate_bag(bag);
  require(bag.slide_id.size() <= 0xFFFF, "slide id too long");
  ByteWriter w;
  w.bytes("CSEB", 4);
  w.u16(kBagVersion);
  w.u8(static_cast<std::uint8_t>(bag.stain));
  w.u8(0);
  w.u16(static_cast<std::uint16_t>(bag.slide_id.size()));
  w.bytes(bag.slide_id.data(), bag.slide_id.size());
  w.u32(static_cast<std::uint32_t>(bag.size()));
  w.u32(static_cast<std::uint32_t>(bag.dim()));
  for (const auto& c : bag.coords) {
    w.u32(c.row);
    w.u32(c.col);
  }
  for (float v : bag.embeddings.data) w.f32(v);
  return w.take();
}

PatchBag decode_bag(std::span<const std::uint8_t> bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "CSEB", 4) != 0) fail(ErrorKind::kFormat, origin + ": bad magic (not a .cseb bag)");
  const std::uint16_t version = r.u16();
  if (version != kBagVersion)
    fail(ErrorKind::kFormat, origin + ": unsupported bag version " + std::to_string(version));
  const std::uint8_t stain = r.u8();
  if (stain >= kNumStains) fail(ErrorKind::kFormat, origin + ": unknown stain id " + std::to_string(stain));
  r.u8();
  PatchBag bag;
  bag.stain = static_cast<StainId>(stain);
  bag.slide_id.resize(r.u16());
  r.bytes(bag.slide_id.data(), bag.slide_id.size());
  const std::uint32_t n = r.u32(), d = r.u32();
  // Check the declared payload against what is left before allocating.
  const std::uint64_t need = 8ull * n + 4ull * n * d;
  if (need > r.remaining()) fail(ErrorKind::kFormat, origin + ": truncated payload");
  bag.coords.resize(n);
  for (auto& c : bag.coords) {
    c.row = r.u32();
    c.col = r.u32();
  }
  bag.embeddings = Matrix<float>(n, d);
  for (auto& v : bag.embeddings.data) v = r.f32();
  if (r.remaining() != 0) fail(ErrorKind::kFormat, origin + ": trailing bytes after payload");
  validate_bag(bag);
  return bag;
}

std::size_t write_bag(const PatchBag& bag, std::ostream& out) {
  const auto bytes = encode_bag(bag);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write_bag: sink failure for '" + bag.slide_id + "'");
  return bytes.size();
}

PatchBag read_bag(std::istream& in, const std::string& origin) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_bag(bytes, origin);
}

std::size_t write_bag_file(const PatchBag& bag, const std::filesystem::path& path) {
  const auto bytes = encode_bag(bag);
  write_file_bytes(path, bytes);
  return bytes.size();
}

PatchBag read_bag_file(const std::filesystem::path& path) {
  return decode_bag(read_file_bytes(path), path.string());
}

}  // namespace xstain
