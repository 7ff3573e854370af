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

// Tensor exchange files, little-endian:
//
//   offset  size     field
//   0       4        magic "RVTN"
//   4       1        dtype tag (1 = float32)
//   5       1        rank (1..8)
//   6       2        reserved, zero
//   8       8*rank   dims, uint64 each
//   ...     4*prod   float32 payload, row-major

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "revoice/audio.h"

namespace revoice {

inline constexpr char kTensorMagic[4] = {'R', 'V', 'T', 'N'};
inline constexpr uint8_t kTensorFloat32 = 1;

struct Tensor {
  std::vector<uint64_t> dims;
  std::vector<float> data;

  size_t elementCount() const;
};

void writeTensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor readTensor(const std::filesystem::path& path);

Tensor tensorFromMatrix(const RowMatrix& m);
Tensor tensorFromVector(const Eigen::VectorXd& v);
/// Requires rank 2.
RowMatrix matrixFromTensor(const Tensor& t);
/// Requires rank 1.
Eigen::VectorXd vectorFromTensor(const Tensor& t);

} // namespace revoice
