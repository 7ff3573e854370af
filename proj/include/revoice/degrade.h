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

// Synthetic degradation of clean speech: room reverberation, additive noise
// at a target SNR and lossy-codec artifacts, all driven by a recipe that
// records every random draw.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "revoice/audio.h"

namespace revoice {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

double distance(const Vec3& a, const Vec3& b);

inline constexpr double kSpeedOfSound = 343.0;
inline constexpr double kWallMargin = 0.3;
inline constexpr double kMinSourceMicDistance = 0.5;

struct RoomSpec {
  double widthX = 5.0;
  double widthY = 4.0;
  double heightZ = 3.0;
  double rt60 = 0.3;
  Vec3 source;
  Vec3 mic;

  /// Ranges: widths in [2, 10] m, height in [2, 5] m, rt60 in [0.2, 0.5] s,
  /// positions at least 0.3 m from every wall.
  void validate() const;
};

enum class Codec { kMp3, kVorbis, kALaw, kAmrWb, kOpus };

inline constexpr std::array<Codec, 5> kAllCodecs = {
    Codec::kMp3, Codec::kVorbis, Codec::kALaw, Codec::kAmrWb, Codec::kOpus};

std::string codecName(Codec codec);
Codec parseCodec(const std::string& name);
/// Selection probability of each codec.
double codecProbability(Codec codec);
/// Allowed bitrates in bits/second.
std::span<const double> allowedBitrates(Codec codec);

struct CodecSpec {
  Codec codec = Codec::kMp3;
  double bitrate = 64000.0;

  void validate() const;
};

enum class DegradationPattern { kNoise, kReverb, kCodec, kReverbCodec };

/// Accepts "clean+noise", "reverb", "codec", "reverb+codec" (a leading '+'
/// is ignored).
DegradationPattern parsePattern(const std::string& name);
std::string patternName(DegradationPattern pattern);

struct DegradationRecipe {
  std::string uttId;
  std::string noiseId;
  double snrDb = 20.0;
  std::optional<RoomSpec> room;
  std::optional<CodecSpec> codec;
  uint64_t rngSeed = 0;
  std::string codecBackend = "surrogate";

  void validate() const;
};

inline constexpr double kMinSnrDb = 5.0;
inline constexpr double kMaxSnrDb = 30.0;

/// Draws every random field of a recipe from `seed`. Each field uses its own
/// sub-stream, so two patterns with the same seed share SNR, room and noise
/// choice and differ only in which stages are present.
DegradationRecipe sampleRecipe(
    uint64_t seed,
    DegradationPattern pattern,
    std::span<const std::string> noiseIds = {});

RoomSpec sampleRoom(uint64_t seed);
CodecSpec sampleCodec(uint64_t seed);

std::string recipeToJson(const DegradationRecipe& recipe);
DegradationRecipe recipeFromJson(const std::string& text);
std::vector<DegradationRecipe> readRecipes(const std::filesystem::path& path);
void writeRecipes(
    std::span<const DegradationRecipe> recipes, const std::filesystem::path& path);

// ------------------------------------------------------------------ reverb

struct Rir {
  std::vector<double> taps;
  int sampleRate = kRate24k;
};

struct RirOptions {
  /// Overrides the wall reflection coefficient derived from rt60. 0 gives the
  /// free-field response (direct path only).
  std::optional<double> reflection;
  /// Uniform random displacement applied to every reflected image source.
  double jitterMeters = 0.05;
  /// Truncate where the remaining energy drops below this level.
  double truncateDb = 60.0;
};

/// Wall reflection coefficient giving the requested RT60 under Eyring's
/// formula.
double reflectionForRt60(const RoomSpec& room);

/// Stochastic image-method impulse response. Direct-path amplitude is 1/d
/// with d in meters; reflected images get a random sign and position jitter.
Rir generateRir(
    const RoomSpec& room,
    int sampleRate,
    uint64_t seed,
    const RirOptions& options = {});

/// Full convolution truncated to the input length. With peakNormalize the
/// result is scaled down if its peak exceeds 1.
AudioClip applyRir(const AudioClip& clip, const Rir& rir, bool peakNormalize = true);

// ------------------------------------------------------------------- noise

inline constexpr double kActiveFrameDb = -50.0;
inline constexpr double kActiveFrameMs = 20.0;

/// RMS over 20 ms frames whose level is above -50 dBFS; the whole clip when
/// no frame qualifies.
double activeRms(std::span<const double> samples, int sampleRate);

/// 10^(-snr/20) * speechRms / noiseRms.
double noiseGainForSnr(double speechRms, double noiseRms, double snrDb);

/// Loops (with a seeded offset) or crops (at a seeded offset) noise to the
/// requested length.
std::vector<double> fitNoise(
    std::span<const double> noise, size_t length, uint64_t seed);

/// The two tracks of a mix as they are summed: `noise` already carries
/// `noiseGain` and both carry `outputScale`.
struct MixComponents {
  std::vector<double> speech;
  std::vector<double> noise;
  double noiseGain = 1.0;
  /// Common factor applied to both tracks to keep the peak at or below 1.
  double outputScale = 1.0;
};

MixComponents mixComponents(
    const AudioClip& speech, const AudioClip& noise, double snrDb, uint64_t seed);

/// speech + gain * noise with the gain set from the active-speech RMS.
AudioClip mixAtSnr(
    const AudioClip& speech, const AudioClip& noise, double snrDb, uint64_t seed);

// ------------------------------------------------------------------- codec

class CodecBackend {
 public:
  virtual ~CodecBackend() = default;
  virtual std::string name() const = 0;
  /// Encodes and decodes. Implementations throw BackendError when the codec
  /// is unavailable.
  virtual AudioClip roundTrip(const AudioClip& clip, const CodecSpec& spec) const = 0;
};

/// Built-in approximation: companded quantization with a bitrate-dependent
/// bit depth followed by a bitrate-dependent low-pass. A-law uses G.711
/// A-law companding at 8 bits and no band limit.
class SurrogateCodecBackend : public CodecBackend {
 public:
  std::string name() const override {
    return "surrogate";
  }
  AudioClip roundTrip(const AudioClip& clip, const CodecSpec& spec) const override;

  struct Params {
    double cutoffHz;  // <= 0 means no low-pass
    int bits;
  };
  static Params paramsFor(const CodecSpec& spec);
};

/// Runs real encoders through an ffmpeg executable.
class ExternalCodecBackend : public CodecBackend {
 public:
  explicit ExternalCodecBackend(std::string ffmpeg = "ffmpeg")
      : ffmpeg_(std::move(ffmpeg)) {}
  std::string name() const override {
    return "external";
  }
  bool available() const;
  AudioClip roundTrip(const AudioClip& clip, const CodecSpec& spec) const override;

 private:
  std::string ffmpeg_;
};

std::unique_ptr<CodecBackend> makeCodecBackend(const std::string& name);

/// Lag (in samples) of `processed` relative to `reference` maximizing their
/// cross-correlation, searched over [-maxLag, maxLag].
int64_t estimateLag(
    std::span<const double> reference,
    std::span<const double> processed,
    int64_t maxLag);

/// Validates the spec, runs the backend and realigns the result to the
/// input's length and timing.
AudioClip applyCodec(
    const AudioClip& clip, const CodecSpec& spec, const CodecBackend& backend);

// ------------------------------------------------------------------- chain

/// Noise clips by id, loaded lazily from a manifest and resampled to 24 kHz.
class NoiseBank {
 public:
  explicit NoiseBank(Manifest manifest);
  const AudioClip& get(const std::string& noiseId);
  std::vector<std::string> ids() const;
  const Manifest& manifest() const {
    return manifest_;
  }

 private:
  Manifest manifest_;
  std::map<std::string, AudioClip> cache_;
};

/// reverb (if room) -> noise -> codec (if codec), output at 24 kHz.
AudioClip degrade(
    const AudioClip& clean,
    NoiseBank& noiseBank,
    const DegradationRecipe& recipe,
    const CodecBackend& backend);

AudioClip degrade(
    const AudioClip& clean,
    const AudioClip& noise,
    const DegradationRecipe& recipe,
    const CodecBackend& backend);

} // namespace revoice
