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

#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "revoice/error.h"
#include "revoice/features.h"
#include "revoice/fixtures.h"
#include "revoice/rng.h"
#include "revoice/tensor_io.h"

using namespace revoice;
namespace fs = std::filesystem;

namespace {

AudioClip tone(double seconds, int rate = kRate24k, uint64_t seed = 0) {
  Rng rng(seed);
  AudioClip c;
  c.sampleRate = rate;
  c.samples.resize(size_t(seconds * rate));
  for (size_t i = 0; i < c.samples.size(); ++i) {
    const double t = double(i) / rate;
    c.samples[i] = 0.3 * std::sin(2 * std::numbers::pi * 180 * t) + 0.02 * rng.uniform(-1, 1);
  }
  return c;
}

AudioClip segment(const AudioClip& c, double from, double to) {
  AudioClip s = c;
  s.samples.assign(c.samples.begin() + long(from * c.sampleRate),
                   c.samples.begin() + long(to * c.sampleRate));
  return s;
}

} // namespace

TEST(SpeechFeaturesTest, ShapeLaw) {
  const ExtractorSpec spec;
  EXPECT_EQ(extractSpeechFeatures(tone(0.6), spec).frames(), 15);
  const auto f = extractSpeechFeatures(tone(0.6), spec);
  EXPECT_EQ(f.dim(), 64);
  EXPECT_EQ(f.frameRate, 25.0);
  EXPECT_TRUE(f.values.allFinite());
  Rng rng(1);
  const auto ext = makeExtractor(spec);
  for (int i = 0; i < 100; ++i) {
    const auto n16 = rng.uniformInt(700, 40000);
    AudioClip c;
    c.sampleRate = kRate16k;
    c.samples.assign(size_t(n16), 0.01);
    ASSERT_EQ(ext->speech(c).frames(), speechFrameCount(n16)) << n16;
    ASSERT_EQ(speechFrameCount(n16), (1 + n16 / 160) / 4);
  }
  AudioClip tiny;
  tiny.sampleRate = kRate16k;
  tiny.samples.assign(100, 0.1);
  EXPECT_THROW(ext->speech(tiny), ValidationError);
}

TEST(SpeechFeaturesTest, DeterministicAndNotGainInvariant) {
  const ExtractorSpec spec;
  const AudioClip c = tone(1.0);
  EXPECT_EQ(extractSpeechFeatures(c, spec).values, extractSpeechFeatures(c, spec).values);
  AudioClip loud = c;
  for (double& v : loud.samples) v *= 2.0;
  EXPECT_GT((extractSpeechFeatures(c, spec).values - extractSpeechFeatures(loud, spec).values)
                .cwiseAbs().maxCoeff(), 1e-3);
}

TEST(TextConditionTest, TokenizerContract) {
  const ExtractorSpec spec;
  const auto e = extractTextCondition("hello", spec);
  EXPECT_EQ(e.values.rows(), 5);
  EXPECT_EQ(e.values.cols(), 32);
  EXPECT_EQ(e.tokenIds.size(), 5u);
  EXPECT_EQ(extractTextCondition("hello", spec).values, e.values);
  const auto f = extractTextCondition("hallo", spec);
  EXPECT_GT((e.values.row(1) - f.values.row(1)).norm(), 0.0);
  EXPECT_EQ((e.values.row(0) - f.values.row(0)).norm(), 0.0);
  EXPECT_THROW(extractTextCondition("", spec), ValidationError);
  EXPECT_EQ(tokenize("h\xC3\xA9").size(), 2u);
  EXPECT_EQ(tokenize("\xE4\xB8\xAD").back(), kTextVocabulary - 1);
}

TEST(SpeakerTest, UnitNormDeterministicAndShortClipRejected) {
  const ExtractorSpec spec;
  const auto d = extractSpeakerEmbedding(tone(1.0), spec);
  EXPECT_EQ(d.values.size(), 16);
  EXPECT_NEAR(d.values.norm(), 1.0, 1e-6);
  EXPECT_EQ(extractSpeakerEmbedding(tone(1.0), spec).values, d.values);
  EXPECT_THROW(extractSpeakerEmbedding(tone(0.3), spec), ValidationError);
}

TEST(SpeakerTest, SameSpeakerSegmentsAreCloserThanOtherSpeakers) {
  const auto corpus = makeFixtureCorpus(0);
  const ExtractorSpec spec;
  // utt0 and utt4 are both spk0; utt1 is spk1.
  const AudioClip& a = corpus.clean[0];
  const double half = a.durationSeconds() / 2;
  const auto first = extractSpeakerEmbedding(segment(a, 0, half), spec);
  const auto second = extractSpeakerEmbedding(segment(a, half, 2 * half), spec);
  for (int other : {1, 2, 3}) {
    const auto o = extractSpeakerEmbedding(corpus.clean[other], spec);
    EXPECT_GT(cosineSimilarity(first, second), cosineSimilarity(first, o)) << other;
  }
}

TEST(SpeakerTest, CosineSimilarity) {
  SpeakerEmbedding a{Eigen::VectorXd::Zero(3), false};
  a.values << 1, 2, 3;
  SpeakerEmbedding b{Eigen::VectorXd::Zero(3), false};
  b.values << -3, 0, 1;
  EXPECT_NEAR(cosineSimilarity(a, a), 1.0, 1e-15);
  EXPECT_NEAR(cosineSimilarity(a, b), 0.0, 1e-15);
  SpeakerEmbedding neg{-a.values, false};
  EXPECT_NEAR(cosineSimilarity(a, neg), -1.0, 1e-15);
  EXPECT_EQ(cosineSimilarity(a, b), cosineSimilarity(b, a));
  SpeakerEmbedding zero{Eigen::VectorXd::Zero(3), false};
  EXPECT_THROW(cosineSimilarity(a, zero), ValidationError);
}

TEST(ExtractorSpecTest, Presets) {
  const auto full = ExtractorSpec::fullScale();
  EXPECT_EQ(full.speechDim, 1024);
  EXPECT_EQ(full.textDim, 512);
  EXPECT_EQ(full.speakerDim, 256);
  const auto desk = ExtractorSpec::deskScale();
  EXPECT_EQ(desk.speechDim, 64);
  EXPECT_EQ(desk.textDim, 32);
  EXPECT_EQ(desk.speakerDim, 16);
  EXPECT_EQ(parseExtractorKind(extractorKindName(ExtractorKind::kExternal)), ExtractorKind::kExternal);
}

TEST(TensorIoTest, RoundTripAndLayout) {
  const fs::path dir = fs::temp_directory_path() / "revoice_tensor";
  fs::create_directories(dir);
  RowMatrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6.5;
  writeTensor(tensorFromMatrix(m), dir / "m.rvt");
  EXPECT_EQ(matrixFromTensor(readTensor(dir / "m.rvt")), m);
  EXPECT_EQ(fs::file_size(dir / "m.rvt"), 8u + 16u + 24u);
  std::ifstream in(dir / "m.rvt", std::ios::binary);
  char head[8];
  in.read(head, 8);
  EXPECT_EQ(std::string(head, 4), "RVTN");
  EXPECT_EQ(head[4], 1);
  EXPECT_EQ(head[5], 2);
  EXPECT_THROW(vectorFromTensor(readTensor(dir / "m.rvt")), ValidationError);

  {
    std::ofstream bad(dir / "bad.rvt", std::ios::binary);
    bad << "NOPE0000";
  }
  EXPECT_THROW(readTensor(dir / "bad.rvt"), FormatError);
  EXPECT_THROW(readTensor(dir / "missing.rvt"), IoError);
}

TEST(ExternalExtractorTest, ReadsFilesWrittenBySurrogate) {
  const fs::path dir = fs::temp_directory_path() / "revoice_external";
  fs::remove_all(dir);
  ExtractorSpec spec;
  const auto surrogate = makeExtractor(spec);
  AudioClip c = tone(1.0);
  c.uttId = "u1";
  const auto s = surrogate->speech(c);
  const auto t = surrogate->text("abc", "u1");
  const auto d = surrogate->speaker(c);
  writeFeatureFiles(dir, "u1", s, t, d);

  ExtractorSpec ext = spec;
  ext.kind = ExtractorKind::kExternal;
  ext.externalDir = dir.string();
  const auto external = makeExtractor(ext);
  EXPECT_LT((external->speech(c).values - s.values).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((external->text("abc", "u1").values - t.values).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((external->speaker(c).values - d.values).cwiseAbs().maxCoeff(), 1e-6);
  AudioClip missing = c;
  missing.uttId = "u2";
  EXPECT_THROW(external->speech(missing), IoError);
}
