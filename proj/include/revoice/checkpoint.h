// Copyright 2026 The revoice Authors.
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

// Versioned named-tensor container:
//   "RVCK" | u32 version | u64 json length | json | u64 count |
//   count x (u32 name length | name | u64 rows | u64 cols | f64 payload)
// All integers little-endian; payloads row-major.

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "revoice/audio.h"
#include "revoice/nn.h"

namespace revoice {

inline constexpr char kCheckpointMagic[4] = {'R', 'V', 'C', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json meta;  // kind, model config, extractor spec, ...
  std::vector<std::pair<std::string, RowMatrix>> tensors;

  const RowMatrix& tensor(const std::string& name) const;
};

void writeCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint readCheckpoint(const std::filesystem::path& path);

/// Appends every parameter of `params` under `prefix`.
void addParams(Checkpoint& ckpt, const nn::ParamSet& params, const std::string& prefix = "");
/// Copies tensors back into `params`; every parameter must be present with
/// a matching shape.
void loadParams(const Checkpoint& ckpt, nn::ParamSet& params, const std::string& prefix = "");

} // namespace revoice
