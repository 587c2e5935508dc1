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

#include "xstain/checkpoint.hpp"

#include <cstring>
#include <set>

#include "xstain/byteio.hpp"

namespace xstain {

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  ByteWriter w;
  w.bytes("CSCK", 4);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    require(t.name.size() <= 0xFFFF, "checkpoint: tensor name too long");
    require(t.dims.size() <= 0xFF, "checkpoint: too many dims for '" + t.name + "'");
    require(t.values.size() == t.numel(), "checkpoint: value count mismatch for '" + t.name + "'");
    if (!all_finite(std::span<const float>(t.values)))
      fail(ErrorKind::kNumeric, "checkpoint: non-finite value in '" + t.name + "'");
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float v : t.values) w.f32(v);
  }
  return w.take();
}

std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "CSCK", 4) != 0) fail(ErrorKind::kFormat, origin + ": bad magic (not a checkpoint)");
  const auto version = r.u16();
  if (version != kCheckpointVersion)
    fail(ErrorKind::kFormat, origin + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = r.u32();
  std::vector<NamedTensor> out;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(r.u16());
    r.bytes(t.name.data(), t.name.size());
    if (!names.insert(t.name).second) fail(ErrorKind::kFormat, origin + ": duplicate tensor '" + t.name + "'");
    t.dims.resize(r.u8());
    for (auto& d : t.dims) d = r.u32();
    const std::uint64_t n = t.numel();
    if (4 * n > r.remaining()) fail(ErrorKind::kFormat, origin + ": truncated payload in '" + t.name + "'");
    t.values.resize(n);
    for (auto& v : t.values) v = r.f32();
    out.push_back(std::move(t));
  }
  if (r.remaining() != 0) fail(ErrorKind::kFormat, origin + ": trailing bytes after last tensor");
  return out;
}

void save_checkpoint(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(tensors));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path), path.string());
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace xstain
