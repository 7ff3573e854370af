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

#include "revoice/fixtures.h"

#include <array>
#include <cmath>
#include <numbers>

#include "revoice/error.h"
#include "revoice/rng.h"

namespace revoice {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPeak = 0.9;
constexpr double kFloorAmplitude = 1e-4;
constexpr int kBlock = 120;  // samples between envelope updates (5 ms)

struct Speaker {
  double f0;
  double tractScale;
  double tiltDbPerOctave;
};

constexpr std::array<Speaker, kFixtureSpeakers> kSpeakers{{
    {100.0, 0.85, -10.0},
    {150.0, 1.00, -4.0},
    {195.0, 1.10, -12.0},
    {240.0, 1.22, -5.0},
}};

struct Vowel {
  double f1, f2, f3;
};

constexpr std::array<Vowel, 5> kVowels{{
    {730.0, 1090.0, 2440.0},
    {270.0, 2290.0, 3010.0},
    {300.0, 870.0, 2240.0},
    {530.0, 1840.0, 2480.0},
    {570.0, 840.0, 2410.0},
}};

constexpr std::array<const char*, 16> kWords{
    "the", "quiet", "river", "runs", "past", "old", "stone", "walls",
    "a", "small", "bird", "sings", "at", "dawn", "near", "home"};

double resonance(double f, double centre, double bandwidth) {
  const double x = (f - centre) / bandwidth;
  return 1.0 / (1.0 + x * x);
}

double envelopeGain(double f, const Vowel& v, const Speaker& s) {
  const double e = resonance(f, v.f1 * s.tractScale, 90.0) +
      0.7 * resonance(f, v.f2 * s.tractScale, 130.0) +
      0.4 * resonance(f, v.f3 * s.tractScale, 180.0) + 0.02;
  const double octaves = std::log2(std::max(f, s.f0) / s.f0);
  return e * std::pow(10.0, s.tiltDbPerOctave * octaves / 20.0);
}

void addVoiced(
    std::vector<double>& out, size_t start, size_t len, const Vowel& v, const Speaker& s,
    double f0Scale, Rng& rng) {
  const double nyquist = 0.5 * kRate24k;
  const int maxHarm = static_cast<int>(nyquist * 0.92 / (s.f0 * 0.8));
  std::vector<double> phase(maxHarm + 1);
  for (auto& p : phase) p = rng.uniform(0.0, kTwoPi);
  const double vibRate = rng.uniform(4.0, 6.0);
  const double vibPhase = rng.uniform(0.0, kTwoPi);
  std::vector<double> amp(maxHarm + 1, 0.0);
  for (size_t n = 0; n < len; ++n) {
    const double t = static_cast<double>(n) / kRate24k;
    const double progress = static_cast<double>(n) / static_cast<double>(len);
    const double f0 = s.f0 * f0Scale * (1.0 - 0.08 * progress) *
        (1.0 + 0.02 * std::sin(kTwoPi * vibRate * t + vibPhase));
    if (n % kBlock == 0) {
      for (int h = 1; h <= maxHarm; ++h) {
        const double f = h * f0;
        amp[h] = f < nyquist * 0.92 ? envelopeGain(f, v, s) : 0.0;
      }
    }
    // Raised-cosine attack and release of 25 ms.
    const double edge = 0.025 * kRate24k;
    double env = 1.0;
    if (n < edge) env = 0.5 - 0.5 * std::cos(std::numbers::pi * n / edge);
    if (len - n < edge) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (len - n) / edge);
    double acc = 0.0;
    for (int h = 1; h <= maxHarm; ++h) {
      phase[h] += kTwoPi * h * f0 / kRate24k;
      if (amp[h] > 0.0) acc += amp[h] * std::sin(phase[h]);
    }
    out[start + n] += env * acc;
  }
}

void addFricative(std::vector<double>& out, size_t start, size_t len, double level, Rng& rng) {
  double prev = 0.0;
  for (size_t n = 0; n < len; ++n) {
    const double x = rng.normal();
    const double env = std::sin(std::numbers::pi * static_cast<double>(n) / len);
    out[start + n] += level * env * (x - 0.85 * prev);
    prev = x;
  }
}

void normalizePeak(std::vector<double>& x, double peak) {
  const double m = peakAbs(x);
  if (m > 0.0) {
    for (auto& v : x) v *= peak / m;
  }
}

AudioClip makeUtterance(int index, uint64_t seed) {
  Rng rng(deriveSeed(seed, 1000 + index));
  const Speaker& spk = kSpeakers[index % kFixtureSpeakers];
  const int syllables = 7 + static_cast<int>(rng.uniformInt(0, 2));

  std::vector<double> out(static_cast<size_t>(0.15 * kRate24k), 0.0);
  std::string transcript;
  for (int s = 0; s < syllables; ++s) {
    if (rng.uniform() < 0.6) {
      const auto len = static_cast<size_t>(rng.uniform(0.03, 0.05) * kRate24k);
      const size_t at = out.size();
      out.resize(at + len, 0.0);
      addFricative(out, at, len, 0.12, rng);
    }
    const auto len = static_cast<size_t>(rng.uniform(0.12, 0.22) * kRate24k);
    const size_t at = out.size();
    out.resize(at + len, 0.0);
    const Vowel& v = kVowels[rng.uniformInt(0, kVowels.size() - 1)];
    addVoiced(out, at, len, v, spk, rng.uniform(0.92, 1.1), rng);
    out.resize(out.size() + static_cast<size_t>(rng.uniform(0.02, 0.08) * kRate24k), 0.0);
    if (s % 2 == 0) {
      if (!transcript.empty()) transcript += ' ';
      transcript += kWords[rng.uniformInt(0, kWords.size() - 1)];
    }
  }
  out.resize(out.size() + static_cast<size_t>(0.15 * kRate24k), 0.0);
  normalizePeak(out, 1.0);
  for (auto& v : out) v += kFloorAmplitude * rng.normal();
  normalizePeak(out, kPeak);

  AudioClip clip;
  clip.samples = std::move(out);
  clip.sampleRate = kRate24k;
  clip.uttId = "utt" + std::to_string(index);
  clip.speakerId = "spk" + std::to_string(index % kFixtureSpeakers);
  clip.transcript = transcript;
  return clip;
}

AudioClip makeNoise(int kind, uint64_t seed) {
  Rng rng(deriveSeed(seed, 2000 + kind));
  const size_t len = 3 * kRate24k;
  std::vector<double> x(len, 0.0);
  std::string name;
  switch (kind) {
    case 0:
      name = "white";
      for (auto& v : x) v = rng.normal();
      break;
    case 1: {
      name = "brown";
      double acc = 0.0;
      for (auto& v : x) {
        acc = 0.995 * acc + rng.normal();
        v = acc;
      }
      break;
    }
    case 2: {
      name = "hum";
      const double f = rng.uniform(50.0, 60.0);
      for (size_t n = 0; n < len; ++n) {
        const double t = static_cast<double>(n) / kRate24k;
        for (int h = 1; h <= 8; ++h) x[n] += std::sin(kTwoPi * h * f * t) / h;
        x[n] += 0.05 * rng.normal();
      }
      break;
    }
    default: {
      name = "babble";
      for (int talker = 0; talker < 6; ++talker) {
        const double f0 = rng.uniform(90.0, 240.0);
        const double rate = rng.uniform(3.0, 6.0);
        const double ph = rng.uniform(0.0, kTwoPi);
        for (size_t n = 0; n < len; ++n) {
          const double t = static_cast<double>(n) / kRate24k;
          const double am = std::max(0.0, std::sin(kTwoPi * rate * t + ph));
          double acc = 0.0;
          for (int h = 1; h * f0 < 4000.0; ++h) acc += std::sin(kTwoPi * h * f0 * t) / h;
          x[n] += am * acc;
        }
      }
      for (auto& v : x) v += 0.02 * rng.normal();
      break;
    }
  }
  normalizePeak(x, 0.5);
  AudioClip clip;
  clip.samples = std::move(x);
  clip.sampleRate = kRate24k;
  clip.uttId = "noise_" + name;
  return clip;
}

} // namespace

FixtureCorpus makeFixtureCorpus(uint64_t seed) {
  FixtureCorpus c;
  for (int i = 0; i < kFixtureUtterances; ++i) c.clean.push_back(makeUtterance(i, seed));
  for (int k = 0; k < 4; ++k) c.noises.push_back(makeNoise(k, seed));
  return c;
}

FixturePaths writeFixtureCorpus(const FixtureCorpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "clean");
  fs::create_directories(dir / "noise");
  Manifest clean;
  for (const auto& clip : corpus.clean) {
    const std::string rel = "clean/" + clip.uttId + ".wav";
    saveWav(clip, dir / rel);
    clean.entries.push_back(
        {clip.uttId, rel, clip.transcript.value_or(""), clip.speakerId.value_or("")});
  }
  Manifest noise;
  for (const auto& clip : corpus.noises) {
    const std::string rel = "noise/" + clip.uttId + ".wav";
    saveWav(clip, dir / rel);
    noise.entries.push_back({clip.uttId, rel, "", ""});
  }
  FixturePaths paths{dir / "clean.jsonl", dir / "noise.jsonl"};
  writeManifest(clean, paths.cleanManifest);
  writeManifest(noise, paths.noiseManifest);
  return paths;
}

} // namespace revoice
