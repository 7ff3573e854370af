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

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>

#include <gtest/gtest.h>

#include "oracles.h"
#include "revoice/degrade.h"
#include "revoice/error.h"
#include "revoice/rng.h"

using namespace revoice;
namespace fs = std::filesystem;

namespace {

AudioClip voiced(size_t n, uint64_t seed, double amp = 0.3) {
  Rng rng(seed);
  AudioClip c;
  c.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double t = double(i) / kRate24k;
    const double env = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * 3.0 * t);
    c.samples[i] = amp * env *
        (std::sin(2 * std::numbers::pi * 150 * t) + 0.5 * std::sin(2 * std::numbers::pi * 450 * t)) +
        0.01 * rng.uniform(-1, 1);
  }
  return c;
}

AudioClip whiteNoise(size_t n, uint64_t seed, double amp = 0.2) {
  Rng rng(seed);
  AudioClip c;
  c.samples.resize(n);
  for (double& v : c.samples) v = amp * rng.uniform(-1, 1);
  return c;
}

} // namespace

TEST(RecipeTest, CodecTableValues) {
  EXPECT_DOUBLE_EQ(codecProbability(Codec::kMp3), 0.5);
  EXPECT_DOUBLE_EQ(codecProbability(Codec::kVorbis), 0.075);
  EXPECT_DOUBLE_EQ(codecProbability(Codec::kALaw), 0.025);
  EXPECT_DOUBLE_EQ(codecProbability(Codec::kAmrWb), 0.025);
  EXPECT_DOUBLE_EQ(codecProbability(Codec::kOpus), 0.375);
  const std::map<Codec, std::vector<double>> rates = {
      {Codec::kMp3, {16e3, 32e3, 64e3, 128e3}},
      {Codec::kVorbis, {32e3, 48e3, 64e3}},
      {Codec::kALaw, {64e3}},
      {Codec::kAmrWb, {6.6e3, 8.85e3, 12.65e3, 14.25e3, 15.85e3, 18.25e3, 19.85e3, 23.05e3, 23.85e3}},
      {Codec::kOpus, {8e3, 16e3, 32e3, 64e3, 128e3}}};
  for (const auto& [codec, expected] : rates) {
    const auto got = allowedBitrates(codec);
    EXPECT_EQ(std::vector<double>(got.begin(), got.end()), expected) << codecName(codec);
    EXPECT_EQ(parseCodec(codecName(codec)), codec);
  }
  EXPECT_THROW((CodecSpec{Codec::kMp3, 20000.0}.validate()), ValidationError);
}

TEST(RecipeTest, PatternsAndDeterminism) {
  const std::vector<std::string> ids = {"n0", "n1", "n2"};
  const auto noise = sampleRecipe(5, parsePattern("clean+noise"), ids);
  EXPECT_FALSE(noise.room);
  EXPECT_FALSE(noise.codec);
  const auto both = sampleRecipe(5, parsePattern("+reverb+codec"), ids);
  EXPECT_TRUE(both.room);
  EXPECT_TRUE(both.codec);
  EXPECT_EQ(both.snrDb, noise.snrDb);
  EXPECT_EQ(both.noiseId, noise.noiseId);
  EXPECT_TRUE(sampleRecipe(5, parsePattern("reverb"), ids).room);
  EXPECT_FALSE(sampleRecipe(5, parsePattern("reverb"), ids).codec);
  EXPECT_TRUE(sampleRecipe(5, parsePattern("codec"), ids).codec);
  EXPECT_EQ(recipeToJson(both), recipeToJson(sampleRecipe(5, DegradationPattern::kReverbCodec, ids)));
  EXPECT_THROW(parsePattern("echo"), ValidationError);
}

TEST(RecipeTest, RangesHold) {
  for (uint64_t s = 0; s < 500; ++s) {
    const auto r = sampleRecipe(s, DegradationPattern::kReverbCodec);
    ASSERT_GE(r.snrDb, 5.0);
    ASSERT_LE(r.snrDb, 30.0);
    const RoomSpec& room = *r.room;
    ASSERT_NO_THROW(room.validate());
    ASSERT_GE(room.rt60, 0.2);
    ASSERT_LE(room.rt60, 0.5);
    ASSERT_GE(distance(room.source, room.mic), kMinSourceMicDistance);
    ASSERT_NO_THROW(r.codec->validate());
  }
}

TEST(RecipeTest, JsonRoundTrip) {
  auto r = sampleRecipe(77, DegradationPattern::kReverbCodec, std::vector<std::string>{"x"});
  r.uttId = "utt";
  const auto back = recipeFromJson(recipeToJson(r));
  EXPECT_EQ(recipeToJson(back), recipeToJson(r));
  EXPECT_EQ(back.codec->bitrate, r.codec->bitrate);
  EXPECT_EQ(back.room->source.y, r.room->source.y);

  const fs::path dir = fs::temp_directory_path() / "revoice_recipes";
  fs::create_directories(dir);
  std::vector<DegradationRecipe> all = {r, sampleRecipe(1, DegradationPattern::kNoise)};
  writeRecipes(all, dir / "r.jsonl");
  const auto read = readRecipes(dir / "r.jsonl");
  ASSERT_EQ(read.size(), 2u);
  EXPECT_FALSE(read[1].room);
}

TEST(RoomTest, ValidationRejectsBadRooms) {
  RoomSpec r;
  r.source = {1, 1, 1};
  r.mic = {3, 2, 1.5};
  EXPECT_NO_THROW(r.validate());
  RoomSpec wide = r;
  wide.widthX = 11;
  EXPECT_THROW(wide.validate(), ValidationError);
  RoomSpec wall = r;
  wall.source.x = 0.1;
  EXPECT_THROW(wall.validate(), ValidationError);
  RoomSpec same = r;
  same.mic = {1.05, 1, 1};
  EXPECT_THROW(generateRir(same, kRate24k, 0), ValidationError);
}

TEST(RirTest, FreeFieldIsSingleDirectTap) {
  RoomSpec r;
  r.source = {1.0, 1.5, 1.2};
  r.mic = {3.7, 2.1, 1.6};
  const double d = distance(r.source, r.mic);
  RirOptions opts;
  opts.reflection = 0.0;
  const Rir rir = generateRir(r, kRate24k, 1, opts);
  const long expected = std::lround(kRate24k * d / 343.0);
  const auto peak = std::max_element(rir.taps.begin(), rir.taps.end(),
      [](double a, double b) { return std::abs(a) < std::abs(b); }) - rir.taps.begin();
  EXPECT_LE(std::abs(peak - expected), 1);
  EXPECT_NEAR(rir.taps[peak], 1.0 / d, 1e-12);
  double rest = 0.0;
  for (size_t i = 0; i < rir.taps.size(); ++i) {
    if (long(i) != peak) rest += std::abs(rir.taps[i]);
  }
  EXPECT_EQ(rest, 0.0);
}

TEST(RirTest, SchroederMatchesRequestedRt60) {
  RoomSpec r;
  r.widthX = 6;
  r.widthY = 4.5;
  r.heightZ = 3;
  r.rt60 = 0.5;
  r.source = {1.2, 1.1, 1.5};
  r.mic = {4.1, 3.0, 1.4};
  const Rir rir = generateRir(r, kRate24k, 9);
  EXPECT_NEAR(oracle::schroederRt60(rir.taps, kRate24k), 0.5, 0.1);
  EXPECT_EQ(generateRir(r, kRate24k, 9).taps, rir.taps);
}

TEST(RirTest, ApplyRirIdentityAndDelay) {
  const AudioClip x = voiced(2400, 1);
  Rir unit;
  unit.taps = {1.0};
  const AudioClip same = applyRir(x, unit);
  ASSERT_EQ(same.samples.size(), x.samples.size());
  for (size_t i = 0; i < x.samples.size(); ++i) ASSERT_NEAR(same.samples[i], x.samples[i], 1e-12);
  Rir delayed;
  delayed.taps = {0.0, 0.0, 0.0, 1.0};
  const AudioClip y = applyRir(x, delayed);
  ASSERT_EQ(y.samples.size(), x.samples.size());
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y.samples[i], 0.0, 1e-12);
  for (size_t i = 3; i < x.samples.size(); ++i) ASSERT_NEAR(y.samples[i], x.samples[i - 3], 1e-12);
  Rir wrongRate = unit;
  wrongRate.sampleRate = 16000;
  EXPECT_THROW(applyRir(x, wrongRate), ValidationError);
}

TEST(RirTest, FreeFieldEnergyFollowsInverseSquare) {
  RoomSpec r;
  r.source = {1, 1, 1};
  r.mic = {3.5, 1, 1};
  RirOptions opts;
  opts.reflection = 0.0;
  const double d = distance(r.source, r.mic);
  const Rir rir = generateRir(r, kRate24k, 0, opts);
  AudioClip x = voiced(24000, 4, 0.1);
  const AudioClip y = applyRir(x, rir, false);
  const size_t delay = rir.taps.size() - 1;
  std::vector<double> ref(x.samples.begin(), x.samples.end() - delay);
  std::vector<double> out(y.samples.begin() + delay, y.samples.end());
  EXPECT_NEAR(oracle::meanPower(out) / oracle::meanPower(ref), 1.0 / (d * d), 1e-9);
}

TEST(MixTest, GainFormula) {
  EXPECT_DOUBLE_EQ(noiseGainForSnr(0.1, 0.1, 0.0), 1.0);
  EXPECT_NEAR(noiseGainForSnr(0.1, 0.1, 20.0), 0.1, 1e-15);
  EXPECT_NEAR(noiseGainForSnr(0.2, 0.05, 6.0), std::pow(10, -0.3) * 4.0, 1e-12);
}

TEST(MixTest, MeasuredSnrMatchesRequest) {
  const AudioClip s = voiced(24000, 2);
  const AudioClip n = whiteNoise(7000, 3);
  for (double snr : {5.0, 12.5, 30.0}) {
    const MixComponents m = mixComponents(s, n, snr, 17);
    const double measured =
        10 * std::log10(oracle::activePower(m.speech, kRate24k) / oracle::meanPower(m.noise));
    EXPECT_NEAR(measured, snr, 0.1);
  }
  AudioClip silent = n;
  std::fill(silent.samples.begin(), silent.samples.end(), 0.0);
  EXPECT_THROW(mixAtSnr(s, silent, 10, 0), ValidationError);
}

TEST(MixTest, OutputNeverClips) {
  const AudioClip s = voiced(4800, 2, 0.95);
  const AudioClip n = whiteNoise(4800, 3, 0.9);
  const AudioClip y = mixAtSnr(s, n, 5.0, 1);
  EXPECT_LE(peakAbs(y.samples), 1.0);
}

TEST(MixTest, FitNoiseLoopsAndCrops) {
  std::vector<double> n = {1, 2, 3, 4, 5};
  const auto looped = fitNoise(n, 12, 3);
  ASSERT_EQ(looped.size(), 12u);
  for (size_t i = 1; i < looped.size(); ++i) {
    const double expected = std::fmod(looped[i - 1], 5.0) + 1.0;
    ASSERT_EQ(looped[i], expected);
  }
  const auto cropped = fitNoise(n, 3, 3);
  ASSERT_EQ(cropped.size(), 3u);
  EXPECT_EQ(cropped[1], cropped[0] + 1);
  EXPECT_EQ(fitNoise(n, 12, 3), looped);
}

TEST(CodecTest, ALawSurrogateMatchesCompandingOracle) {
  const AudioClip x = voiced(4800, 5);
  const SurrogateCodecBackend backend;
  const CodecSpec spec{Codec::kALaw, 64000.0};
  const AudioClip y = backend.roundTrip(x, spec);
  ASSERT_EQ(y.samples.size(), x.samples.size());
  const double levels = 128.0;
  double err = 0.0;
  for (size_t i = 0; i < x.samples.size(); ++i) {
    const double c = oracle::aLawCompress(x.samples[i]);
    const double q = (std::floor(c * levels) + 0.5) / levels;
    const double ref = oracle::aLawExpand(std::clamp(q, -1.0, 1.0));
    err = std::max(err, std::abs(ref - y.samples[i]));
  }
  EXPECT_LT(err, 1e-12);
  const double snr = 10 * std::log10(oracle::meanPower(x.samples) /
      [&] {
        std::vector<double> d(x.samples.size());
        for (size_t i = 0; i < d.size(); ++i) d[i] = y.samples[i] - x.samples[i];
        return oracle::meanPower(d);
      }());
  EXPECT_GT(snr, 30.0);
}

TEST(CodecTest, LowBitrateMp3SurrogateBandLimits) {
  const AudioClip x = whiteNoise(16384, 8, 0.3);
  const SurrogateCodecBackend backend;
  const AudioClip y = applyCodec(x, CodecSpec{Codec::kMp3, 16000.0}, backend);
  ASSERT_EQ(y.samples.size(), x.samples.size());
  auto bandRatioDb = [&](const std::vector<double>& sig) {
    std::vector<double> frame(sig.begin() + 4096, sig.begin() + 4096 + 2048);
    const auto p = oracle::dftPower(frame);
    double lo = 0, hi = 0;
    for (size_t k = 1; k < p.size(); ++k) (k * 24000.0 / 2048 > 8000 ? hi : lo) += p[k];
    return 10 * std::log10(hi / lo);
  };
  EXPECT_LE(bandRatioDb(y.samples) - bandRatioDb(x.samples), -20.0);
}

TEST(CodecTest, ExternalBackendFailsLoudly) {
  const ExternalCodecBackend missing("/nonexistent/ffmpeg");
  EXPECT_FALSE(missing.available());
  const AudioClip x = voiced(2400, 1);
  EXPECT_THROW(missing.roundTrip(x, CodecSpec{Codec::kOpus, 32000.0}), BackendError);
  EXPECT_THROW(makeCodecBackend("magic"), ValidationError);
}

TEST(CodecTest, LagEstimateRecoversShift) {
  const AudioClip x = voiced(4000, 6);
  std::vector<double> shifted(x.samples.size(), 0.0);
  for (size_t i = 37; i < shifted.size(); ++i) shifted[i] = x.samples[i - 37];
  EXPECT_EQ(estimateLag(x.samples, shifted, 100), 37);
}

TEST(DegradeTest, ChainIsDeterministicAndPatternSensitive) {
  const AudioClip clean = voiced(24000, 10);
  const AudioClip noise = whiteNoise(30000, 11, 0.1);
  const SurrogateCodecBackend backend;
  const auto reverb = sampleRecipe(42, DegradationPattern::kReverb);
  const auto both = sampleRecipe(42, DegradationPattern::kReverbCodec);
  const AudioClip a = degrade(clean, noise, both, backend);
  EXPECT_EQ(a.samples, degrade(clean, noise, both, backend).samples);
  EXPECT_EQ(a.sampleRate, kRate24k);
  EXPECT_EQ(a.samples.size(), clean.samples.size());
  EXPECT_NE(a.samples, degrade(clean, noise, reverb, backend).samples);

  const auto onlyNoise = sampleRecipe(42, DegradationPattern::kNoise);
  EXPECT_EQ(degrade(clean, noise, onlyNoise, backend).samples,
            mixAtSnr(clean, noise, onlyNoise.snrDb, deriveSeed(onlyNoise.rngSeed, 102)).samples);
}
