// Copyright 2026 The hccrop Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hccrop/tensor.hpp"

namespace hccrop {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Archive layout: 8-byte magic "HCCROPCK", u32 version, u64 header length,
// canonical JSON header {config, metadata, arrays: [{name, shape, offset}]},
// little-endian float64 payload, then a SHA-256 digest of everything before it.
struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();    // {"model": ..., "train": ...}
  nlohmann::json metadata = nlohmann::json::object();  // epoch, step, seed, rng state
  std::vector<std::pair<std::string, nn::Tensor>> arrays;

  const nn::Tensor* find(const std::string& name) const;
  const nn::Tensor& at(const std::string& name) const;
};

// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws IncompatibleCheckpointError on a foreign magic or version and
// IntegrityError on truncation or digest mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string sha256_hex(const std::string& bytes);

}  // namespace hccrop
