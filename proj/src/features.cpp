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

#include "revoice/features.h"

#include <algorithm>
#include <cmath>

#include "revoice/error.h"
#include "revoice/nn.h"
#include "revoice/rng.h"
#include "revoice/tensor_io.h"

namespace revoice {

namespace {

// Fixed standardization of 16 kHz log-mel values before projection.
constexpr double kLogMelCenter = -4.0;
constexpr double kLogMelScale = 0.25;
constexpr double kMinSpeakerSeconds = 0.5;
// 40 dB expressed in natural-log power.
const double kSpeakerActiveRange = 4.0 * std::log(10.0);

RowMatrix seededNormal(Eigen::Index rows, Eigen::Index cols, double stddev, uint64_t seed) {
  Rng rng(seed);
  return nn::randomNormal(rows, cols, stddev, rng);
}

RowMatrix averagePool2(const RowMatrix& x) {
  const Eigen::Index out = x.rows() / 2;
  RowMatrix y(out, x.cols());
  for (Eigen::Index i = 0; i < out; ++i) {
    y.row(i) = 0.5 * (x.row(2 * i) + x.row(2 * i + 1));
  }
  return y;
}

} // namespace

ExtractorSpec ExtractorSpec::fullScale() {
  ExtractorSpec s;
  s.speechDim = 1024;
  s.textDim = 512;
  s.speakerDim = 256;
  return s;
}

ExtractorSpec ExtractorSpec::deskScale() {
  return ExtractorSpec{};
}

void ExtractorSpec::validate() const {
  if (speechDim <= 0 || textDim <= 0 || speakerDim <= 0) {
    throw ValidationError("extractor dims must be positive");
  }
  if (kind == ExtractorKind::kExternal && externalDir.empty()) {
    throw ValidationError("external extractor needs a feature directory");
  }
}

std::string extractorKindName(ExtractorKind kind) {
  return kind == ExtractorKind::kSurrogate ? "surrogate" : "external";
}

ExtractorKind parseExtractorKind(const std::string& name) {
  if (name == "surrogate") return ExtractorKind::kSurrogate;
  if (name == "external") return ExtractorKind::kExternal;
  throw ValidationError("unknown extractor kind '" + name + "'");
}

int64_t speechFrameCount(int64_t samples16k) {
  const int hop = MelConfig::speech16k().hopSamples(kRate16k);
  return stftFrameCount(samples16k, hop) / 4;
}

std::vector<int> tokenize(const std::string& utf8) {
  std::vector<int> ids;
  size_t i = 0;
  while (i < utf8.size()) {
    const auto c = static_cast<unsigned char>(utf8[i]);
    uint32_t cp = 0;
    int len = 1;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1F;
      len = 2;
    } else if ((c >> 4) == 0xE) {
      cp = c & 0x0F;
      len = 3;
    } else if ((c >> 3) == 0x1E) {
      cp = c & 0x07;
      len = 4;
    } else {
      throw ValidationError("transcript is not valid UTF-8");
    }
    if (i + len > utf8.size()) {
      throw ValidationError("transcript is not valid UTF-8");
    }
    for (int k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(utf8[i + k]);
      if ((cc >> 6) != 0x2) {
        throw ValidationError("transcript is not valid UTF-8");
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
    ids.push_back(cp < kTextVocabulary - 1 ? static_cast<int>(cp) : kTextVocabulary - 1);
    i += len;
  }
  return ids;
}

// --------------------------------------------------------------- surrogate

SurrogateExtractor::SurrogateExtractor(ExtractorSpec spec)
    : spec_(std::move(spec)), mel_(MelConfig::speech16k()) {
  spec_.validate();
  melFilter_ = melFilterbank(mel_, kRate16k);
  const int nMels = mel_.nMels;
  speechProj_ = seededNormal(
      nMels, spec_.speechDim, 1.0 / std::sqrt(nMels), deriveSeed(spec_.seed, 1));
  tokenTable_ = seededNormal(kTextVocabulary, spec_.textDim, 1.0, deriveSeed(spec_.seed, 2));
  speakerProj_ = seededNormal(
      2 * nMels, spec_.speakerDim, 1.0 / std::sqrt(2.0 * nMels), deriveSeed(spec_.seed, 3));
}

RowMatrix SurrogateExtractor::logMel16k(const AudioClip& clip) const {
  const AudioClip x = clip.sampleRate == kRate16k ? clip : resample(clip, kRate16k);
  const int win = mel_.windowSamples(kRate16k);
  if (static_cast<int64_t>(x.samples.size()) < win) {
    throw ValidationError("clip " + clip.uttId + " is shorter than one analysis window");
  }
  const RowMatrix power =
      powerSpectrogram(x.samples, mel_.fftSize, mel_.hopSamples(kRate16k), win);
  const RowMatrix mel = power * melFilter_;
  return (mel.array() + kLogMelFloor).log().matrix();
}

SpeechFeatures SurrogateExtractor::speech(const AudioClip& clip) const {
  if (clip.samples.empty()) {
    throw ValidationError("empty clip");
  }
  const AudioClip x = clip.sampleRate == kRate16k ? clip : resample(clip, kRate16k);
  if (speechFrameCount(static_cast<int64_t>(x.samples.size())) < 1) {
    throw ValidationError("clip " + clip.uttId + " is shorter than one feature frame");
  }
  RowMatrix lm = logMel16k(x);
  lm = ((lm.array() - kLogMelCenter) * kLogMelScale).matrix();
  RowMatrix projected = lm * speechProj_;
  projected = averagePool2(averagePool2(projected));
  SpeechFeatures f;
  f.values = projected.array().tanh().matrix();
  return f;
}

TextCondition SurrogateExtractor::text(const std::string& transcript, const std::string&) const {
  if (transcript.empty()) {
    throw ValidationError("empty transcript");
  }
  TextCondition t;
  t.tokenIds = tokenize(transcript);
  t.values.resize(static_cast<Eigen::Index>(t.tokenIds.size()), spec_.textDim);
  for (size_t i = 0; i < t.tokenIds.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    t.values.row(row) = tokenTable_.row(t.tokenIds[i]) +
        nn::sinusoidalEmbedding(static_cast<double>(i), spec_.textDim).row(0);
  }
  return t;
}

SpeakerEmbedding SurrogateExtractor::speaker(const AudioClip& clip) const {
  if (clip.durationSeconds() < kMinSpeakerSeconds) {
    throw ValidationError(
        "speaker embedding needs at least 0.5 s of audio (" + clip.uttId + ")");
  }
  const RowMatrix all = logMel16k(clip);
  // Statistics over active frames: within 40 dB (in log-power) of the
  // loudest frame.
  const Eigen::VectorXd level = all.rowwise().mean();
  const double threshold = level.maxCoeff() - kSpeakerActiveRange;
  std::vector<Eigen::Index> active;
  for (Eigen::Index t = 0; t < all.rows(); ++t) {
    if (level(t) >= threshold) active.push_back(t);
  }
  RowMatrix lm(static_cast<Eigen::Index>(active.size()), all.cols());
  for (size_t i = 0; i < active.size(); ++i) lm.row(i) = all.row(active[i]);
  const Eigen::RowVectorXd mean = lm.colwise().mean();
  const Eigen::RowVectorXd stddev =
      ((lm.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
  Eigen::RowVectorXd stats(2 * lm.cols());
  // Both halves are centered across bands so the embedding reflects spectral
  // shape rather than the statistics every clip shares.
  stats << (mean.array() - mean.mean()).matrix(), (stddev.array() - stddev.mean()).matrix();
  Eigen::VectorXd emb = (stats * speakerProj_).transpose();
  const double norm = emb.norm();
  if (!(norm > 0.0)) {
    throw ValidationError("degenerate speaker statistics for " + clip.uttId);
  }
  return SpeakerEmbedding{emb / norm, true};
}

// ---------------------------------------------------------------- external

ExternalExtractor::ExternalExtractor(ExtractorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

std::filesystem::path ExternalExtractor::speechPath(
    const std::filesystem::path& dir, const std::string& uttId) {
  return dir / (uttId + ".speech.rvt");
}

std::filesystem::path ExternalExtractor::textPath(
    const std::filesystem::path& dir, const std::string& uttId) {
  return dir / (uttId + ".text.rvt");
}

std::filesystem::path ExternalExtractor::speakerPath(
    const std::filesystem::path& dir, const std::string& uttId) {
  return dir / (uttId + ".speaker.rvt");
}

SpeechFeatures ExternalExtractor::speech(const AudioClip& clip) const {
  SpeechFeatures f;
  f.values = matrixFromTensor(readTensor(speechPath(spec_.externalDir, clip.uttId)));
  if (f.values.cols() != spec_.speechDim || f.values.rows() < 1) {
    throw ValidationError("external speech features for " + clip.uttId + " have the wrong shape");
  }
  if (!f.values.allFinite()) {
    throw ValidationError("external speech features for " + clip.uttId + " are not finite");
  }
  return f;
}

TextCondition ExternalExtractor::text(const std::string& transcript, const std::string& uttId) const {
  if (transcript.empty()) {
    throw ValidationError("empty transcript");
  }
  TextCondition t;
  t.values = matrixFromTensor(readTensor(textPath(spec_.externalDir, uttId)));
  if (t.values.cols() != spec_.textDim || t.values.rows() < 1) {
    throw ValidationError("external text features for " + uttId + " have the wrong shape");
  }
  auto ids = tokenize(transcript);
  if (static_cast<Eigen::Index>(ids.size()) == t.values.rows()) {
    t.tokenIds = std::move(ids);
  }
  return t;
}

SpeakerEmbedding ExternalExtractor::speaker(const AudioClip& clip) const {
  Eigen::VectorXd v = vectorFromTensor(readTensor(speakerPath(spec_.externalDir, clip.uttId)));
  if (v.size() != spec_.speakerDim) {
    throw ValidationError("external speaker embedding for " + clip.uttId + " has the wrong size");
  }
  const double n = v.norm();
  if (!(n > 0.0)) {
    throw ValidationError("external speaker embedding for " + clip.uttId + " is zero");
  }
  return SpeakerEmbedding{v / n, true};
}

// ----------------------------------------------------------------- helpers

std::unique_ptr<FeatureExtractor> makeExtractor(const ExtractorSpec& spec) {
  if (spec.kind == ExtractorKind::kExternal) {
    return std::make_unique<ExternalExtractor>(spec);
  }
  return std::make_unique<SurrogateExtractor>(spec);
}

SpeechFeatures extractSpeechFeatures(const AudioClip& clip, const ExtractorSpec& spec) {
  return makeExtractor(spec)->speech(clip);
}

TextCondition extractTextCondition(
    const std::string& transcript, const ExtractorSpec& spec, const std::string& uttId) {
  return makeExtractor(spec)->text(transcript, uttId);
}

SpeakerEmbedding extractSpeakerEmbedding(const AudioClip& clip, const ExtractorSpec& spec) {
  return makeExtractor(spec)->speaker(clip);
}

void writeFeatureFiles(
    const std::filesystem::path& dir,
    const std::string& uttId,
    const SpeechFeatures& speech,
    const TextCondition& text,
    const SpeakerEmbedding& speaker) {
  std::filesystem::create_directories(dir);
  writeTensor(tensorFromMatrix(speech.values), ExternalExtractor::speechPath(dir, uttId));
  writeTensor(tensorFromMatrix(text.values), ExternalExtractor::textPath(dir, uttId));
  writeTensor(tensorFromVector(speaker.values), ExternalExtractor::speakerPath(dir, uttId));
}

double cosineSimilarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  if (a.values.size() != b.values.size()) {
    throw ValidationError("speaker embeddings differ in size");
  }
  const double na = a.values.norm();
  const double nb = b.values.norm();
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw ValidationError("cosine similarity of a zero vector");
  }
  return std::clamp(a.values.dot(b.values) / (na * nb), -1.0, 1.0);
}

} // namespace revoice
