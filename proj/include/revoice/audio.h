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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace revoice {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kRate16k = 16000;
inline constexpr int kRate24k = 24000;

/// A mono waveform with its identity metadata.
struct AudioClip {
  std::vector<double> samples;
  int sampleRate = kRate24k;
  std::string uttId;
  std::optional<std::string> speakerId;
  std::optional<std::string> transcript;

  double durationSeconds() const {
    return static_cast<double>(samples.size()) / sampleRate;
  }
};

struct ManifestEntry {
  std::string uttId;
  std::string audioPath;
  std::string transcript;
  std::string speakerId;
};

/// Line-delimited JSON records, one utterance per line. Relative audio
/// paths are resolved against the manifest's directory on read.
struct Manifest {
  std::vector<ManifestEntry> entries;

  const ManifestEntry& find(const std::string& uttId) const;
};

Manifest readManifest(const std::filesystem::path& path);
void writeManifest(const Manifest& manifest, const std::filesystem::path& path);
/// Throws ValidationError on duplicate utt ids.
void validateManifest(const Manifest& manifest);

enum class WavEncoding { kPcm16, kFloat32 };

AudioClip loadWav(const std::filesystem::path& path);
void saveWav(
    const AudioClip& clip,
    const std::filesystem::path& path,
    WavEncoding encoding = WavEncoding::kPcm16);

/// Band-limited (Kaiser-windowed sinc, polyphase) sample-rate conversion.
/// Output length is round(T * target / source). Same-rate calls return an
/// exact copy.
AudioClip resample(const AudioClip& clip, int targetRate);

struct MelConfig {
  int nMels = 128;
  double windowMs = 50.0;
  double hopMs = 12.5;
  int fftSize = 2048;
  double fMin = 20.0;
  double fMax = 12000.0;

  /// Config used by the 16 kHz surrogate speech extractor.
  static MelConfig speech16k();

  int windowSamples(int sampleRate) const;
  int hopSamples(int sampleRate) const;
  void validate(int sampleRate) const;
};

inline constexpr double kLogMelFloor = 1e-5;

/// Frame count of a center-padded STFT: 1 + floor(T / hop).
int64_t stftFrameCount(int64_t numSamples, int hop);

/// Magnitude-squared STFT, rows are frames, columns fftSize/2+1 bins.
/// Periodic Hann window of `window` samples centered in each fftSize frame;
/// the signal is zero-padded by fftSize/2 on both sides.
RowMatrix powerSpectrogram(
    std::span<const double> samples,
    int fftSize,
    int hop,
    int window);

/// Triangular HTK-mel filterbank, [fftSize/2+1 x nMels].
RowMatrix melFilterbank(const MelConfig& cfg, int sampleRate);

/// log(mel power + 1e-5), [frames x nMels].
RowMatrix logMel(const AudioClip& clip, const MelConfig& cfg);

double rms(std::span<const double> samples);
double peakAbs(std::span<const double> samples);

} // namespace revoice
