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

#include "revoice/degrade.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fft_util.h"
#include "revoice/error.h"
#include "revoice/rng.h"

namespace revoice {

namespace {

// 24 ln(10) / c, the Sabine/Eyring constant (~0.161 s/m).
constexpr double kReverbConstant = 24.0 * 2.302585092994046 / kSpeedOfSound;

struct AxisImage {
  double offset;  // image coordinate minus mic coordinate
  int reflections;
  bool direct;
};

std::vector<AxisImage> axisImages(double src, double mic, double width, double reach) {
  std::vector<AxisImage> out;
  const int n = static_cast<int>(std::ceil(reach / (2.0 * width))) + 1;
  for (int k = -n; k <= n; ++k) {
    for (int u = 0; u <= 1; ++u) {
      const double pos = (1 - 2 * u) * src + 2.0 * k * width;
      const double offset = pos - mic;
      if (std::abs(offset) > reach + width) {
        continue;
      }
      out.push_back({offset, std::abs(k - u) + std::abs(k), k == 0 && u == 0});
    }
  }
  return out;
}

constexpr double kCalibrationBinSeconds = 5e-4;

// Slope-fitted T20 (-5 to -25 dB, scaled to 60 dB) of the expected energy
// decay for reflection coefficient `beta`. energy[n][b] holds the summed 1/r^2
// of images with n reflections arriving in bin b.
double expectedT20(const std::vector<std::vector<double>>& energy, double beta) {
  const size_t bins = energy.front().size();
  std::vector<double> e(bins, 0.0);
  double w = 1.0;
  const double b2 = beta * beta;
  for (const auto& row : energy) {
    for (size_t i = 0; i < bins; ++i) e[i] += w * row[i];
    w *= b2;
  }
  for (size_t i = bins - 1; i-- > 0;) e[i] += e[i + 1];
  double st = 0, sd = 0, stt = 0, std_ = 0;
  int count = 0;
  for (size_t i = 0; i < bins; ++i) {
    const double level = 10.0 * std::log10(e[i] / e[0] + 1e-300);
    if (level > -5.0 || level < -25.0) continue;
    const double t = (double(i) + 0.5) * kCalibrationBinSeconds;
    st += t;
    sd += level;
    stt += t * t;
    std_ += t * level;
    ++count;
  }
  if (count < 2) return 0.0;
  const double slope = (std_ - st * sd / count) / (stt - st * st / count);
  return slope < 0.0 ? -60.0 / slope : std::numeric_limits<double>::infinity();
}

// Reflection coefficient whose expected T20 equals rt60, by bisection.
double calibrateReflection(
    const std::vector<AxisImage>& xs, const std::vector<AxisImage>& ys,
    const std::vector<AxisImage>& zs, int maxRefl, double reach, double tMax,
    double rt60, double eyring) {
  const auto bins = static_cast<size_t>(std::ceil(tMax / kCalibrationBinSeconds)) + 1;
  std::vector<std::vector<double>> energy(maxRefl + 1, std::vector<double>(bins, 0.0));
  const double reach2 = reach * reach;
  for (const auto& ix : xs) {
    for (const auto& iy : ys) {
      const double dxy = ix.offset * ix.offset + iy.offset * iy.offset;
      if (dxy > reach2) continue;
      for (const auto& iz : zs) {
        const double r2 = std::max(0.01, dxy + iz.offset * iz.offset);
        if (r2 > reach2) continue;
        const auto bin = static_cast<size_t>(std::sqrt(r2) / kSpeedOfSound / kCalibrationBinSeconds);
        if (bin >= bins) continue;
        energy[ix.reflections + iy.reflections + iz.reflections][bin] += 1.0 / r2;
      }
    }
  }
  double lo = 1e-3, hi = std::min(0.99999, std::max(eyring, 0.5) + 0.05);
  if (expectedT20(energy, hi) < rt60) return hi;
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expectedT20(energy, mid) < rt60 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> fftConvolve(std::span<const double> x, std::span<const double> h) {
  const size_t full = x.size() + h.size() - 1;
  const int n = detail::nextPow2(static_cast<int>(full));
  detail::RealFft fft(n);
  std::vector<double> a(n, 0.0), b(n, 0.0);
  std::copy(x.begin(), x.end(), a.begin());
  std::copy(h.begin(), h.end(), b.begin());
  std::vector<detail::Complex> fa, fb;
  fft.forward(a, fa);
  fft.forward(b, fb);
  for (size_t k = 0; k < fa.size(); ++k) {
    fa[k] *= fb[k];
  }
  std::vector<double> out;
  fft.inverse(fa, out);
  out.resize(full);
  return out;
}

} // namespace

// ------------------------------------------------------------------ reverb

double reflectionForRt60(const RoomSpec& room) {
  const double volume = room.widthX * room.widthY * room.heightZ;
  const double surface = 2.0 *
      (room.widthX * room.widthY + room.widthX * room.heightZ +
       room.widthY * room.heightZ);
  // Eyring: rt60 = k V / (-S ln(1 - alpha)), beta^2 = 1 - alpha.
  return std::exp(-kReverbConstant * volume / (2.0 * surface * room.rt60));
}

Rir generateRir(
    const RoomSpec& room, int sampleRate, uint64_t seed, const RirOptions& options) {
  room.validate();
  if (sampleRate <= 0) {
    throw ValidationError("RIR sample rate must be positive");
  }
  const double direct = distance(room.source, room.mic);
  if (direct < 0.1) {
    throw ValidationError("source and microphone are collocated");
  }
  const double beta = options.reflection.value_or(reflectionForRt60(room));
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw ValidationError("reflection coefficient must lie in [0, 1)");
  }

  Rir rir;
  rir.sampleRate = sampleRate;
  const auto directTap =
      static_cast<size_t>(std::lround(sampleRate * direct / kSpeedOfSound));
  if (beta == 0.0) {
    rir.taps.assign(directTap + 1, 0.0);
    rir.taps[directTap] = 1.0 / direct;
    return rir;
  }

  const double volume = room.widthX * room.widthY * room.heightZ;
  const double surface = 2.0 *
      (room.widthX * room.widthY + room.widthX * room.heightZ +
       room.widthY * room.heightZ);
  const double rt60 = options.reflection
      ? -kReverbConstant * volume / (2.0 * surface * std::log(beta))
      : room.rt60;
  const double tMax = 1.25 * rt60 + direct / kSpeedOfSound;
  const double reach = kSpeedOfSound * tMax;
  const auto length = static_cast<size_t>(std::ceil(tMax * sampleRate)) + 1;
  rir.taps.assign(length, 0.0);

  const auto xs = axisImages(room.source.x, room.mic.x, room.widthX, reach);
  const auto ys = axisImages(room.source.y, room.mic.y, room.widthY, reach);
  const auto zs = axisImages(room.source.z, room.mic.z, room.heightZ, reach);

  int maxRefl = 0;
  for (const auto* axis : {&xs, &ys, &zs}) {
    int m = 0;
    for (const auto& a : *axis) m = std::max(m, a.reflections);
    maxRefl += m;
  }
  const double calibrated = options.reflection
      ? beta
      : calibrateReflection(xs, ys, zs, maxRefl, reach, tMax, room.rt60, beta);
  std::vector<double> betaPow(maxRefl + 1);
  betaPow[0] = 1.0;
  for (int i = 1; i <= maxRefl; ++i) betaPow[i] = betaPow[i - 1] * calibrated;

  Rng rng(seed);
  const double jitter = options.jitterMeters;
  const double reach2 = reach * reach;
  for (const auto& ix : xs) {
    for (const auto& iy : ys) {
      const double dxy = ix.offset * ix.offset + iy.offset * iy.offset;
      if (dxy > reach2) continue;
      for (const auto& iz : zs) {
        double dx = ix.offset, dy = iy.offset, dz = iz.offset;
        const bool isDirect = ix.direct && iy.direct && iz.direct;
        double sign = 1.0;
        if (!isDirect) {
          dx += rng.uniform(-jitter, jitter);
          dy += rng.uniform(-jitter, jitter);
          dz += rng.uniform(-jitter, jitter);
          sign = (rng.next() >> 63) != 0 ? 1.0 : -1.0;
        }
        const double r = std::max(0.1, std::sqrt(dx * dx + dy * dy + dz * dz));
        if (r > reach) continue;
        const auto tap = static_cast<size_t>(std::lround(sampleRate * r / kSpeedOfSound));
        if (tap >= length) continue;
        const int refl = ix.reflections + iy.reflections + iz.reflections;
        rir.taps[tap] += sign * betaPow[refl] / r;
      }
    }
  }

  // Drop the tail once the remaining energy is below the truncation level.
  double total = 0.0;
  for (double v : rir.taps) total += v * v;
  const double threshold = total * std::pow(10.0, -options.truncateDb / 10.0);
  double residual = 0.0;
  size_t keep = rir.taps.size();
  for (size_t i = rir.taps.size(); i-- > 0;) {
    if (residual + rir.taps[i] * rir.taps[i] >= threshold) {
      keep = i + 1;
      break;
    }
    residual += rir.taps[i] * rir.taps[i];
  }
  rir.taps.resize(std::max(keep, directTap + 1));
  return rir;
}

AudioClip applyRir(const AudioClip& clip, const Rir& rir, bool peakNormalize) {
  if (clip.sampleRate != rir.sampleRate) {
    throw ValidationError("applyRir: clip and RIR sample rates differ");
  }
  if (rir.taps.empty()) {
    throw ValidationError("applyRir: empty RIR");
  }
  AudioClip out = clip;
  auto full = fftConvolve(clip.samples, rir.taps);
  full.resize(clip.samples.size());
  out.samples = std::move(full);
  if (peakNormalize) {
    const double peak = peakAbs(out.samples);
    if (peak > 1.0) {
      for (double& v : out.samples) v /= peak;
    }
  }
  return out;
}

// ------------------------------------------------------------------- noise

double activeRms(std::span<const double> samples, int sampleRate) {
  const auto frame =
      std::max<size_t>(1, static_cast<size_t>(std::lround(kActiveFrameMs * sampleRate / 1000.0)));
  const double thresh = std::pow(10.0, kActiveFrameDb / 20.0);
  double acc = 0.0;
  size_t count = 0;
  for (size_t start = 0; start < samples.size(); start += frame) {
    const size_t n = std::min(frame, samples.size() - start);
    const auto seg = samples.subspan(start, n);
    if (rms(seg) > thresh) {
      for (double v : seg) acc += v * v;
      count += n;
    }
  }
  if (count == 0) {
    return rms(samples);
  }
  return std::sqrt(acc / static_cast<double>(count));
}

double noiseGainForSnr(double speechRms, double noiseRms, double snrDb) {
  if (!(noiseRms > 0.0)) {
    throw ValidationError("noise RMS must be positive");
  }
  return std::pow(10.0, -snrDb / 20.0) * speechRms / noiseRms;
}

std::vector<double> fitNoise(std::span<const double> noise, size_t length, uint64_t seed) {
  if (noise.empty()) {
    throw ValidationError("empty noise clip");
  }
  Rng rng(seed);
  std::vector<double> out(length);
  if (noise.size() >= length) {
    const auto offset = static_cast<size_t>(
        rng.uniformInt(0, static_cast<int64_t>(noise.size() - length)));
    std::copy_n(noise.begin() + static_cast<std::ptrdiff_t>(offset), length, out.begin());
  } else {
    const auto offset = static_cast<size_t>(
        rng.uniformInt(0, static_cast<int64_t>(noise.size()) - 1));
    for (size_t i = 0; i < length; ++i) {
      out[i] = noise[(offset + i) % noise.size()];
    }
  }
  return out;
}

MixComponents mixComponents(
    const AudioClip& speech, const AudioClip& noise, double snrDb, uint64_t seed) {
  if (speech.sampleRate != noise.sampleRate) {
    throw ValidationError("mixAtSnr: speech and noise sample rates differ");
  }
  if (speech.samples.empty()) {
    throw ValidationError("mixAtSnr: empty speech clip");
  }
  if (!(rms(noise.samples) > 0.0)) {
    throw ValidationError("mixAtSnr: noise clip " + noise.uttId + " is silent");
  }
  const double speechRms = activeRms(speech.samples, speech.sampleRate);
  if (!(speechRms > 0.0)) {
    throw ValidationError("mixAtSnr: speech clip " + speech.uttId + " is silent");
  }
  MixComponents mix;
  mix.speech = speech.samples;
  mix.noise = fitNoise(noise.samples, speech.samples.size(), seed);
  const double noiseRms = rms(mix.noise);
  if (!(noiseRms > 0.0)) {
    throw ValidationError("mixAtSnr: selected noise segment is silent");
  }
  mix.noiseGain = noiseGainForSnr(speechRms, noiseRms, snrDb);
  double peak = 0.0;
  for (size_t i = 0; i < mix.noise.size(); ++i) {
    mix.noise[i] *= mix.noiseGain;
    peak = std::max(peak, std::abs(mix.speech[i] + mix.noise[i]));
  }
  if (peak > 1.0) {
    mix.outputScale = 1.0 / peak;
    for (size_t i = 0; i < mix.noise.size(); ++i) {
      mix.speech[i] *= mix.outputScale;
      mix.noise[i] *= mix.outputScale;
    }
  }
  return mix;
}

AudioClip mixAtSnr(
    const AudioClip& speech, const AudioClip& noise, double snrDb, uint64_t seed) {
  const auto mix = mixComponents(speech, noise, snrDb, seed);
  AudioClip out = speech;
  for (size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] = mix.speech[i] + mix.noise[i];
  }
  return out;
}

// ------------------------------------------------------------------- chain

NoiseBank::NoiseBank(Manifest manifest) : manifest_(std::move(manifest)) {
  validateManifest(manifest_);
  if (manifest_.entries.empty()) {
    throw ValidationError("noise bank is empty");
  }
}

const AudioClip& NoiseBank::get(const std::string& noiseId) {
  auto it = cache_.find(noiseId);
  if (it != cache_.end()) {
    return it->second;
  }
  const auto& entry = manifest_.find(noiseId);
  AudioClip clip = loadWav(entry.audioPath);
  clip.uttId = entry.uttId;
  if (clip.sampleRate != kRate24k) {
    clip = resample(clip, kRate24k);
  }
  return cache_.emplace(noiseId, std::move(clip)).first->second;
}

std::vector<std::string> NoiseBank::ids() const {
  std::vector<std::string> out;
  for (const auto& e : manifest_.entries) out.push_back(e.uttId);
  return out;
}

AudioClip degrade(
    const AudioClip& clean,
    const AudioClip& noise,
    const DegradationRecipe& recipe,
    const CodecBackend& backend) {
  recipe.validate();
  AudioClip x = clean.sampleRate == kRate24k ? clean : resample(clean, kRate24k);
  AudioClip n = noise.sampleRate == kRate24k ? noise : resample(noise, kRate24k);
  if (recipe.room) {
    const Rir rir = generateRir(*recipe.room, kRate24k, deriveSeed(recipe.rngSeed, 101));
    x = applyRir(x, rir);
  }
  x = mixAtSnr(x, n, recipe.snrDb, deriveSeed(recipe.rngSeed, 102));
  if (recipe.codec) {
    x = applyCodec(x, *recipe.codec, backend);
  }
  const double peak = peakAbs(x.samples);
  if (peak > 1.0) {
    for (double& v : x.samples) v /= peak;
  }
  x.uttId = clean.uttId;
  return x;
}

AudioClip degrade(
    const AudioClip& clean,
    NoiseBank& noiseBank,
    const DegradationRecipe& recipe,
    const CodecBackend& backend) {
  return degrade(clean, noiseBank.get(recipe.noiseId), recipe, backend);
}

} // namespace revoice
