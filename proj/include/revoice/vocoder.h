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

// Vocoder: 4x learned feature upsampling, speaker FiLM, an iterative
// refinement decoder started from white noise, and its training losses
// (multi-period discriminator + multi-resolution STFT).

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "revoice/cleaner.h"

namespace revoice {

struct StftResolution {
  int fftSize = 1024;
  int hop = 120;
  int window = 600;
};

struct VocoderConfig {
  double featureRateIn = 25.0;
  double upsampledRate = 100.0;
  int sampleRate = kRate24k;
  std::vector<int> ublockFactors{5, 4, 3, 2, 2};
  int nRefineIterations = 5;
  double lambdaGain = 0.9;
  std::vector<int> mpdPeriods{2, 3, 5, 7, 11, 13, 17, 19};
  std::vector<StftResolution> stftResolutions{
      {1024, 120, 600}, {2048, 240, 1200}, {512, 50, 240}};

  int featureDim = 64;   // D
  int speakerDim = 16;   // Q
  int hiddenDim = 128;
  int iterEmbedDim = 16;
  std::vector<int> mpdChannels{8, 16, 16};
  int mpdKernel = 5;
  int mpdStride = 3;
  uint64_t seed = 0;

  /// Samples per upsampled frame, product(ublockFactors).
  int hopSamples() const;

  static VocoderConfig fullScale();
  static VocoderConfig deskScale();
  static VocoderConfig tiny();
  void validate() const;
};

inline constexpr int kUpsampleFactor = 4;
inline constexpr int kUpsampleKernel = 4;

/// Period-folded discriminators. Each branch reshapes [T x 1] into
/// [ceil(T/p) x p] (zero padded) and runs a strided conv stack over rows.
class MultiPeriodDiscriminator {
 public:
  MultiPeriodDiscriminator() = default;
  MultiPeriodDiscriminator(const VocoderConfig& config, nn::ParamSet& params, Rng& rng);

  struct Output {
    std::vector<std::vector<ag::Var>> features;  // per branch, per layer
    std::vector<ag::Var> logits;                 // per branch
  };

  Output operator()(const ag::Var& wave) const;

  size_t branchCount() const {
    return branches_.size();
  }
  std::vector<int> periods() const;

 private:
  struct Branch {
    int period = 2;
    std::vector<ag::Var> weights;
    std::vector<ag::Var> biases;
    std::vector<int> strides;
  };
  std::vector<Branch> branches_;
  double slope_ = 0.1;
};

class VocoderModel {
 public:
  explicit VocoderModel(const VocoderConfig& config);
  VocoderModel(const VocoderModel&) = delete;
  VocoderModel& operator=(const VocoderModel&) = delete;
  VocoderModel(VocoderModel&&) = default;
  VocoderModel& operator=(VocoderModel&&) = default;

  const VocoderConfig& config() const {
    return config_;
  }
  nn::ParamSet& generatorParams() {
    return gen_;
  }
  const nn::ParamSet& generatorParams() const {
    return gen_;
  }
  nn::ParamSet& discriminatorParams() {
    return disc_;
  }
  const nn::ParamSet& discriminatorParams() const {
    return disc_;
  }
  const MultiPeriodDiscriminator& discriminator() const {
    return mpd_;
  }

  /// [K x D] -> [4K x D].
  ag::Var upsample(const ag::Var& features) const;
  /// film(S', d) with d: [1 x Q].
  ag::Var conditionSpeaker(const ag::Var& upsampled, const ag::Var& speaker) const;
  /// Returns [4K * hop x 1].
  ag::Var synthesize(const ag::Var& features, const ag::Var& speaker, uint64_t seed) const;

 private:
  ag::Var refine(
      const ag::Var& y, const ag::Var& upsampled, const ag::Var& cond, int iteration) const;

  VocoderConfig config_;
  nn::ParamSet gen_;
  nn::ParamSet disc_;
  ag::Var upKernel_[2];
  ag::Var upBias_[2];
  FilmParams film_;
  nn::Linear inWave_;
  nn::Linear inFeature_;
  nn::Linear inCond_;
  ag::Var iterProj_;
  nn::Conv1d context_[2];
  nn::Linear outWave_;
  ag::Var skip_;
  RowMatrix olaWindow_;
  MultiPeriodDiscriminator mpd_;
};

SpeechFeatures upsampleFeatures(const SpeechFeatures& features, const VocoderModel& model);
SpeechFeatures conditionSpeaker(
    const SpeechFeatures& upsampled, const SpeakerEmbedding& speaker, const VocoderModel& model);
AudioClip synthesize(
    const VocoderModel& model,
    const SpeechFeatures& features,
    const SpeakerEmbedding& speaker,
    uint64_t seed);

/// lambda * y / max|y|.
std::vector<double> gainNormalize(std::span<const double> y, double lambda);

struct StftLossReport {
  double spectralConvergence = 0.0;
  double logMagnitude = 0.0;
  double total = 0.0;
};

/// Mean over resolutions of ||S| - |Y||_F / ||S||_F + mean|log|S| - log|Y||.
ag::Var multiResolutionStftLoss(
    const ag::Var& y,
    const ag::Var& s,
    std::span<const StftResolution> resolutions,
    StftLossReport* report = nullptr);

/// LSGAN discriminator loss summed over branches.
ag::Var discriminatorLoss(
    const MultiPeriodDiscriminator::Output& real, const MultiPeriodDiscriminator::Output& fake);
/// LSGAN generator loss summed over branches.
ag::Var generatorAdversarialLoss(const MultiPeriodDiscriminator::Output& fake);
/// Mean absolute feature difference summed over branches and layers.
ag::Var featureMatchingLoss(
    const MultiPeriodDiscriminator::Output& real, const MultiPeriodDiscriminator::Output& fake);

struct VocoderLossReport {
  StftLossReport stft;
  double generatorAdversarial = 0.0;
  double featureMatching = 0.0;
  double discriminator = 0.0;
};

VocoderLossReport vocoderLosses(
    std::span<const double> y, std::span<const double> s, const VocoderModel& model);

} // namespace revoice
