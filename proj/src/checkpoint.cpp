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

#include "revoice/checkpoint.h"

#include <cstring>
#include <fstream>

#include "revoice/error.h"

namespace revoice {

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw FormatError("truncated checkpoint (" + what + ")");
  }
  return v;
}

constexpr uint64_t kMaxString = 1ull << 28;

} // namespace

const RowMatrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

void writeCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write checkpoint " + path.string());
  }
  out.write(kCheckpointMagic, 4);
  put<uint32_t>(out, kCheckpointVersion);
  const std::string meta = ckpt.meta.dump();
  put<uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put<uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint64_t>(out, static_cast<uint64_t>(t.rows()));
    put<uint64_t>(out, static_cast<uint64_t>(t.cols()));
    out.write(
        reinterpret_cast<const char*>(t.data()),
        static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

Checkpoint readCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open checkpoint " + path.string());
  }
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError(path.string() + " is not a checkpoint");
  }
  const auto version = get<uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError(
        path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto metaLen = get<uint64_t>(in, "meta length");
  if (metaLen > kMaxString) throw FormatError(path.string() + ": corrupt meta length");
  std::string meta(metaLen, '\0');
  if (!in.read(meta.data(), static_cast<std::streamsize>(metaLen))) {
    throw FormatError("truncated checkpoint (meta)");
  }
  Checkpoint ckpt;
  try {
    ckpt.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  const auto count = get<uint64_t>(in, "tensor count");
  for (uint64_t i = 0; i < count; ++i) {
    const auto nameLen = get<uint32_t>(in, "name length");
    std::string name(nameLen, '\0');
    if (!in.read(name.data(), nameLen)) throw FormatError("truncated checkpoint (name)");
    const auto rows = get<uint64_t>(in, "rows");
    const auto cols = get<uint64_t>(in, "cols");
    if (rows * cols > kMaxString) throw FormatError(path.string() + ": corrupt tensor dims");
    RowMatrix t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!in.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw FormatError("truncated checkpoint (tensor " + name + ")");
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void addParams(Checkpoint& ckpt, const nn::ParamSet& params, const std::string& prefix) {
  for (const auto& [name, v] : params.entries()) {
    ckpt.tensors.emplace_back(prefix + name, v.value());
  }
}

void loadParams(const Checkpoint& ckpt, nn::ParamSet& params, const std::string& prefix) {
  for (const auto& [name, v] : params.entries()) {
    const RowMatrix& t = ckpt.tensor(prefix + name);
    if (t.rows() != v.rows() || t.cols() != v.cols()) {
      throw ValidationError("checkpoint tensor " + prefix + name + " has the wrong shape");
    }
    ag::Var target = v;
    target.mutableValue() = t;
  }
}

} // namespace revoice
