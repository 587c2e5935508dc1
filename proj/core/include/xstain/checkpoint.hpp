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

// Checkpoint format (little-endian):
//   "CSCK" | u16 version=1 | u32 count |
//   count x (u16 name_len | name | u8 ndim | ndim x u32 dim | f32 values)

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "xstain/tensor.hpp"

namespace xstain {

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes,
                                           const std::string& origin = "<memory>");

void save_checkpoint(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the encoded bytes; used for freeze checks and config hashes.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);

}  // namespace xstain
