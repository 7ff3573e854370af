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

#include "revoice/tensor_io.h"

#include <cstring>
#include <fstream>

#include "revoice/error.h"

namespace revoice {

size_t Tensor::elementCount() const {
  size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void writeTensor(const Tensor& tensor, const std::filesystem::path& path) {
  if (tensor.dims.empty() || tensor.dims.size() > 8) {
    throw ValidationError("tensor rank must be in [1, 8]");
  }
  if (tensor.elementCount() != tensor.data.size()) {
    throw ValidationError("tensor payload does not match its dims");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write tensor " + path.string());
  }
  out.write(kTensorMagic, 4);
  const uint8_t header[4] = {
      kTensorFloat32, static_cast<uint8_t>(tensor.dims.size()), 0, 0};
  out.write(reinterpret_cast<const char*>(header), 4);
  for (uint64_t d : tensor.dims) {
    out.write(reinterpret_cast<const char*>(&d), sizeof(d));
  }
  out.write(
      reinterpret_cast<const char*>(tensor.data.data()),
      static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

Tensor readTensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open tensor " + path.string());
  }
  char magic[4];
  uint8_t header[4];
  if (!in.read(magic, 4) || !in.read(reinterpret_cast<char*>(header), 4)) {
    throw IoError(path.string() + ": truncated tensor header");
  }
  if (std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad tensor magic");
  }
  if (header[0] != kTensorFloat32) {
    throw FormatError(path.string() + ": unsupported dtype tag");
  }
  const uint8_t rank = header[1];
  if (rank == 0 || rank > 8) {
    throw FormatError(path.string() + ": bad tensor rank");
  }
  Tensor t;
  t.dims.resize(rank);
  for (auto& d : t.dims) {
    if (!in.read(reinterpret_cast<char*>(&d), sizeof(d))) {
      throw IoError(path.string() + ": truncated tensor dims");
    }
  }
  t.data.resize(t.elementCount());
  if (!in.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(float)))) {
    throw IoError(path.string() + ": truncated tensor payload");
  }
  return t;
}

Tensor tensorFromMatrix(const RowMatrix& m) {
  Tensor t;
  t.dims = {static_cast<uint64_t>(m.rows()), static_cast<uint64_t>(m.cols())};
  t.data.resize(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    t.data[i] = static_cast<float>(m.data()[i]);
  }
  return t;
}

Tensor tensorFromVector(const Eigen::VectorXd& v) {
  Tensor t;
  t.dims = {static_cast<uint64_t>(v.size())};
  t.data.resize(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    t.data[i] = static_cast<float>(v(i));
  }
  return t;
}

RowMatrix matrixFromTensor(const Tensor& t) {
  if (t.dims.size() != 2) {
    throw ValidationError("expected a rank-2 tensor");
  }
  RowMatrix m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = t.data[i];
  }
  return m;
}

Eigen::VectorXd vectorFromTensor(const Tensor& t) {
  if (t.dims.size() != 1) {
    throw ValidationError("expected a rank-1 tensor");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(t.dims[0]));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = t.data[i];
  }
  return v;
}

} // namespace revoice
