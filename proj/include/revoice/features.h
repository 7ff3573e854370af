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

// Speech, text and speaker feature extractors. The surrogate implementations
// are fixed seeded projections; the external implementation reads tensors
// produced by another tool.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "revoice/audio.h"

namespace revoice {

inline constexpr double kFeatureFrameRate = 25.0;
/// Samples per feature frame at 16 kHz (10 ms mel hop, two 2x pools).
inline constexpr int kSamplesPerFeatureFrame16k = 640;

struct SpeechFeatures {
  RowMatrix values;  // [K x D]
  double frameRate = kFeatureFrameRate;
  int sourceRate = kRate16k;

  Eigen::Index frames() const {
    return values.rows();
  }
  Eigen::Index dim() const {
    return values.cols();
  }
};

struct TextCondition {
  RowMatrix values;  // [M x W]
  std::vector<int> tokenIds;
};

struct SpeakerEmbedding {
  Eigen::VectorXd values;  // [Q]
  bool unitNorm = true;
};

enum class ExtractorKind { kSurrogate, kExternal };

struct ExtractorSpec {
  ExtractorKind kind = ExtractorKind::kSurrogate;
  int speechDim = 64;   // D
  int textDim = 32;     // W
  int speakerDim = 16;  // Q
  uint64_t seed = 0;
  /// Directory of tensor files for the external kind:
  /// <utt_id>.speech.rvt, <utt_id>.text.rvt, <utt_id>.speaker.rvt.
  std::string externalDir;

  static ExtractorSpec fullScale();
  static ExtractorSpec deskScale();
  void validate() const;
};

std::string extractorKindName(ExtractorKind kind);
ExtractorKind parseExtractorKind(const std::string& name);

/// Number of 25 fps frames produced for a 16 kHz clip of `samples16k`
/// samples: floor((1 + floor(T / 160)) / 4).
int64_t speechFrameCount(int64_t samples16k);

inline constexpr int kTextVocabulary = 512;

/// One token per Unicode code point; code points >= 511 share id 511.
std::vector<int> tokenize(const std::string& utf8);

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual const ExtractorSpec& spec() const = 0;
  virtual SpeechFeatures speech(const AudioClip& clip) const = 0;
  /// `uttId` is only consulted by extractors that look features up by id.
  virtual TextCondition text(const std::string& transcript, const std::string& uttId) const = 0;
  virtual SpeakerEmbedding speaker(const AudioClip& clip) const = 0;
};

/// log-mel (16 kHz) -> seeded projection to D -> two 2x average pools ->
/// tanh for speech; seeded embedding table + sinusoidal positions for text;
/// seeded projection of per-band log-mel statistics, unit-normalized, for
/// the speaker. Not gain-invariant for speech.
class SurrogateExtractor : public FeatureExtractor {
 public:
  explicit SurrogateExtractor(ExtractorSpec spec);
  const ExtractorSpec& spec() const override {
    return spec_;
  }
  SpeechFeatures speech(const AudioClip& clip) const override;
  TextCondition text(const std::string& transcript, const std::string& uttId) const override;
  SpeakerEmbedding speaker(const AudioClip& clip) const override;

 private:
  ExtractorSpec spec_;
  MelConfig mel_;
  RowMatrix melFilter_;
  RowMatrix speechProj_;   // [nMels x D]
  RowMatrix tokenTable_;   // [vocab x W]
  RowMatrix speakerProj_;  // [2 nMels x Q]

  RowMatrix logMel16k(const AudioClip& clip) const;
};

/// Reads features written by an outside tool in the tensor exchange format.
class ExternalExtractor : public FeatureExtractor {
 public:
  explicit ExternalExtractor(ExtractorSpec spec);
  const ExtractorSpec& spec() const override {
    return spec_;
  }
  SpeechFeatures speech(const AudioClip& clip) const override;
  TextCondition text(const std::string& transcript, const std::string& uttId) const override;
  SpeakerEmbedding speaker(const AudioClip& clip) const override;

  static std::filesystem::path speechPath(const std::filesystem::path& dir, const std::string& uttId);
  static std::filesystem::path textPath(const std::filesystem::path& dir, const std::string& uttId);
  static std::filesystem::path speakerPath(const std::filesystem::path& dir, const std::string& uttId);

 private:
  ExtractorSpec spec_;
};

std::unique_ptr<FeatureExtractor> makeExtractor(const ExtractorSpec& spec);

SpeechFeatures extractSpeechFeatures(const AudioClip& clip, const ExtractorSpec& spec);
TextCondition extractTextCondition(
    const std::string& transcript, const ExtractorSpec& spec, const std::string& uttId = "");
SpeakerEmbedding extractSpeakerEmbedding(const AudioClip& clip, const ExtractorSpec& spec);

/// Writes <utt_id>.speech.rvt / .text.rvt / .speaker.rvt into `dir`.
void writeFeatureFiles(
    const std::filesystem::path& dir,
    const std::string& uttId,
    const SpeechFeatures& speech,
    const TextCondition& text,
    const SpeakerEmbedding& speaker);

double cosineSimilarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

} // namespace revoice
