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

// JSON config file with one section per module. A file only needs the keys
// it changes; any key not present in the defaults is an error.

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "revoice/train_eval.h"

namespace revoice {

inline constexpr const char* kConfigEnvVar = "REVOICE_CONFIG";
inline constexpr const char* kEffectiveConfigName = "effective_config.json";

struct DegradeSettings {
  std::string pattern = "reverb+codec";
  std::string codecBackend = "surrogate";
};

struct RunConfig {
  uint64_t seed = 0;
  int workers = 1;
  ExtractorSpec extractor;
  CleanerConfig cleaner;
  VocoderConfig vocoder;
  TrainConfig cleanerTrain = TrainConfig::cleanerDefaults();
  TrainConfig vocoderTrain = TrainConfig::vocoderDefaults();
  DegradeSettings degrade;

  void validate() const;
};

nlohmann::json toJson(const ExtractorSpec& spec);
nlohmann::json toJson(const CleanerConfig& config);
nlohmann::json toJson(const VocoderConfig& config);
nlohmann::json toJson(const TrainConfig& config);
nlohmann::json toJson(const RunConfig& config);

/// Each parser starts from the defaults and rejects unknown keys.
ExtractorSpec extractorSpecFromJson(const nlohmann::json& j);
CleanerConfig cleanerConfigFromJson(const nlohmann::json& j);
VocoderConfig vocoderConfigFromJson(const nlohmann::json& j);
TrainConfig trainConfigFromJson(const nlohmann::json& j, const TrainConfig& defaults);
RunConfig runConfigFromJson(const nlohmann::json& j);

/// Reads `path`, or $REVOICE_CONFIG when `path` is empty, or returns the
/// defaults when neither is set.
RunConfig loadRunConfig(const std::optional<std::filesystem::path>& path);

/// Writes <dir>/effective_config.json and returns its path.
std::filesystem::path writeEffectiveConfig(
    const RunConfig& config, const std::filesystem::path& dir);

} // namespace revoice
