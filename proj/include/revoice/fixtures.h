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

// Synthetic toy corpus: harmonic "speech" with per-speaker pitch, vocal
// tract scale and spectral tilt, plus a small noise bank. Everything is
// generated in code so tests run offline.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "revoice/audio.h"

namespace revoice {

struct FixtureCorpus {
  std::vector<AudioClip> clean;   // 24 kHz, speaker ids and transcripts set
  std::vector<AudioClip> noises;  // 24 kHz noise bank
};

inline constexpr int kFixtureUtterances = 8;
inline constexpr int kFixtureSpeakers = 4;

FixtureCorpus makeFixtureCorpus(uint64_t seed = 0);

struct FixturePaths {
  std::filesystem::path cleanManifest;
  std::filesystem::path noiseManifest;
};

/// Writes clean/*.wav, noise/*.wav, clean.jsonl and noise.jsonl under `dir`.
FixturePaths writeFixtureCorpus(const FixtureCorpus& corpus, const std::filesystem::path& dir);

} // namespace revoice
