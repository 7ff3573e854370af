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

// Feature cleaner: predicts clean speech features from degraded ones,
// conditioned on text and speaker, refined over shared-weight iterations.

#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "revoice/features.h"
#include "revoice/nn.h"

namespace revoice {

/// conv2(lrelu(conv1(A)) + b), both convolutions kernel 3, stride 1.
/// conv1 maps D -> Q channels, conv2 maps Q -> D; b is added to every frame.
struct FilmParams {
  nn::Conv1d conv1;
  nn::Conv1d conv2;
  double lreluSlope = 0.1;

  static FilmParams create(
      nn::ParamSet& params, const std::string& name, int featureDim, int condDim, Rng& rng);

  int featureDim() const {
    return conv1.inChannels;
  }
  int condDim() const {
    return conv1.outChannels;
  }
};

inline constexpr int kFilmKernel = 3;

/// A: [K x D], b: [1 x Q].
ag::Var film(const ag::Var& a, const ag::Var& b, const FilmParams& params);
RowMatrix film(const RowMatrix& a, const Eigen::RowVectorXd& b, const FilmParams& params);

struct CleanerConfig {
  int numBlocks = 2;        // N
  int blockDim = 32;        // D_b
  int attnHidden = 64;
  int numHeads = 2;
  int speechDim = 64;       // D
  int textDim = 32;         // W
  int speakerDim = 16;      // Q
  int numIterations = 2;
  int postnetLayers = 5;
  int postnetKernel = 5;
  int convKernel = 7;
  int ffMultiplier = 4;
  int iterEmbedDim = 128;
  uint64_t seed = 0;

  static CleanerConfig fullScale();
  static CleanerConfig deskScale();
  /// Small enough for exhaustive finite-difference checks.
  static CleanerConfig tiny();
  void validate() const;
};

/// Dilation of block n: 2^(n mod 2).
int blockDilation(int blockIndex);

class CleanerModel {
 public:
  explicit CleanerModel(const CleanerConfig& config);
  CleanerModel(const CleanerModel&) = delete;
  CleanerModel& operator=(const CleanerModel&) = delete;
  CleanerModel(CleanerModel&&) = default;
  CleanerModel& operator=(CleanerModel&&) = default;

  const CleanerConfig& config() const {
    return config_;
  }
  nn::ParamSet& params() {
    return params_;
  }
  const nn::ParamSet& params() const {
    return params_;
  }

  struct Outputs {
    std::vector<ag::Var> prePostnet;   // one [K x D] per iteration
    std::vector<ag::Var> postPostnet;
  };

  /// x: [K x D], text: [M x W], speaker: [1 x Q]. `iterations` overrides
  /// config().numIterations when positive.
  Outputs forward(
      const ag::Var& x, const ag::Var& text, const ag::Var& speaker, int iterations = 0) const;

  /// One refinement pass (post-Post-Net output) at an explicit iteration
  /// index. forward() chains these for i = 0, 1, ...
  RowMatrix step(
      const RowMatrix& current, const RowMatrix& text, const RowMatrix& speaker,
      int iteration) const;

  SpeechFeatures clean(
      const SpeechFeatures& x,
      const TextCondition& text,
      const SpeakerEmbedding& speaker,
      int iterations = 0) const;

 private:
  struct Attention {
    nn::Linear q, k, v, o;
    int heads = 1;
    ag::Var operator()(const ag::Var& query, const ag::Var& memory) const;
  };
  struct FeedForward {
    nn::LayerNorm norm;
    nn::Linear in, out;
    ag::Var operator()(const ag::Var& x) const;
  };
  struct Block {
    Attention crossAttn;
    nn::LayerNorm crossNorm;
    FeedForward ff1;
    nn::LayerNorm selfNorm;
    Attention selfAttn;
    nn::LayerNorm convNorm;
    nn::Linear convIn;  // D_b -> 2 D_b, gated
    ag::Var depthwiseW;
    ag::Var depthwiseB;
    nn::LayerNorm convMidNorm;
    nn::Linear convOut;
    FeedForward ff2;
    nn::LayerNorm finalNorm;
    int dilation = 1;
  };

  ag::Var runBlock(const Block& block, const ag::Var& h, const ag::Var& cond) const;
  std::pair<ag::Var, ag::Var> iterate(
      const ag::Var& current, const ag::Var& baseCond, int iteration) const;

  CleanerConfig config_;
  nn::ParamSet params_;
  nn::Linear inputProj_;
  nn::Linear textProj_;
  nn::Linear speakerProj_;
  FilmParams filmSpeaker_;
  FilmParams filmIteration_;
  std::vector<Block> blocks_;
  nn::Linear outputProj_;
  std::vector<nn::Conv1d> postnet_;
};

SpeechFeatures cleanFeatures(
    const CleanerModel& model,
    const SpeechFeatures& x,
    const TextCondition& text,
    const SpeakerEmbedding& speaker);

struct IterationLoss {
  double prePostnet = 0.0;
  double postPostnet = 0.0;
};

/// l1, l2sq and sc are summed over every (iteration, pre/post) output;
/// total = l1 + l2sq + sc.
struct CleanerLossReport {
  double l1 = 0.0;
  double l2sq = 0.0;
  double sc = 0.0;
  std::vector<IterationLoss> perIteration;
  double total = 0.0;
};

struct CleanerPrediction {
  RowMatrix prePostnet;
  RowMatrix postPostnet;
};

/// sum |S - P| + sum (S - P)^2 + sum (S - P)^2 / sum S^2 per output.
CleanerLossReport cleanerLoss(
    const RowMatrix& target, std::span<const CleanerPrediction> outputs);

/// Differentiable form of cleanerLoss; fills `report` when given.
ag::Var cleanerLoss(
    const ag::Var& target, const CleanerModel::Outputs& outputs, CleanerLossReport* report);

struct FrameCrop {
  SpeechFeatures clean;
  SpeechFeatures degraded;
  int64_t offset = 0;
};

inline constexpr int kDefaultCropFrames = 15;

/// Takes the same n-frame window (uniform offset in [0, K - n]) from both.
FrameCrop cropTrainingFrames(
    const SpeechFeatures& clean,
    const SpeechFeatures& degraded,
    uint64_t seed,
    int nFrames = kDefaultCropFrames);

} // namespace revoice
