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

#include "revoice/audio.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fft_util.h"
#include "revoice/error.h"

namespace revoice {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- manifest

const ManifestEntry& Manifest::find(const std::string& uttId) const {
  for (const auto& e : entries) {
    if (e.uttId == uttId) {
      return e;
    }
  }
  throw ValidationError("manifest has no utterance '" + uttId + "'");
}

void validateManifest(const Manifest& manifest) {
  std::set<std::string> seen;
  for (const auto& e : manifest.entries) {
    if (e.uttId.empty()) {
      throw ValidationError("manifest entry with empty utt_id");
    }
    if (!seen.insert(e.uttId).second) {
      throw ValidationError("duplicate utt_id in manifest: " + e.uttId);
    }
  }
}

Manifest readManifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open manifest " + path.string());
  }
  const fs::path base = path.parent_path();
  Manifest manifest;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& ex) {
      throw FormatError(
          path.string() + ":" + std::to_string(lineNo) + ": " + ex.what());
    }
    ManifestEntry e;
    try {
      e.uttId = rec.at("utt_id").get<std::string>();
      e.audioPath = rec.at("audio_path").get<std::string>();
      e.transcript = rec.value("transcript", std::string());
      e.speakerId = rec.value("speaker_id", std::string());
    } catch (const json::exception& ex) {
      throw FormatError(
          path.string() + ":" + std::to_string(lineNo) + ": " + ex.what());
    }
    if (fs::path(e.audioPath).is_relative()) {
      e.audioPath = (base / e.audioPath).string();
    }
    manifest.entries.push_back(std::move(e));
  }
  validateManifest(manifest);
  return manifest;
}

void writeManifest(const Manifest& manifest, const fs::path& path) {
  validateManifest(manifest);
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write manifest " + path.string());
  }
  for (const auto& e : manifest.entries) {
    json rec = {
        {"utt_id", e.uttId},
        {"audio_path", e.audioPath},
        {"transcript", e.transcript},
        {"speaker_id", e.speakerId}};
    out << rec.dump() << '\n';
  }
}

// --------------------------------------------------------------------- wav

namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T readLe(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void writeLe(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

} // namespace

AudioClip loadWav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<char> bytes(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    if (bytes.size() < 12) {
      throw IoError(name + ": truncated RIFF header");
    }
    throw FormatError(name + ": not a RIFF/WAVE file");
  }

  uint16_t format = 0;
  uint16_t channels = 0;
  uint32_t rate = 0;
  uint16_t bits = 0;
  bool haveFmt = false;
  const char* data = nullptr;
  size_t dataSize = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* chunk = bytes.data() + pos;
    const auto size = readLe<uint32_t>(chunk + 4);
    const size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) {
        throw IoError(name + ": truncated fmt chunk");
      }
      format = readLe<uint16_t>(bytes.data() + body);
      channels = readLe<uint16_t>(bytes.data() + body + 2);
      rate = readLe<uint32_t>(bytes.data() + body + 4);
      bits = readLe<uint16_t>(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) {
          throw FormatError(name + ": malformed WAVE_FORMAT_EXTENSIBLE");
        }
        format = readLe<uint16_t>(bytes.data() + body + 24);
      }
      haveFmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (body + size > bytes.size()) {
        throw IoError(name + ": truncated data chunk");
      }
      data = bytes.data() + body;
      dataSize = size;
      break;
    }
    pos = body + size + (size & 1U);
  }
  if (!haveFmt) {
    throw FormatError(name + ": missing fmt chunk");
  }
  if (data == nullptr) {
    throw IoError(name + ": missing data chunk");
  }
  if (channels == 0 || rate == 0) {
    throw FormatError(name + ": invalid channel count or sample rate");
  }
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw FormatError(
        name + ": unsupported encoding (format " + std::to_string(format) +
        ", " + std::to_string(bits) + " bits); only PCM-16 and float-32");
  }

  const size_t frameBytes = static_cast<size_t>(bits / 8) * channels;
  const size_t frames = dataSize / frameBytes;
  if (frames == 0) {
    throw FormatError(name + ": no samples");
  }

  AudioClip clip;
  clip.sampleRate = static_cast<int>(rate);
  clip.uttId = path.stem().string();
  clip.samples.resize(frames);
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (size_t c = 0; c < channels; ++c) {
      const char* p = data + i * frameBytes + c * (bits / 8);
      acc += pcm16 ? readLe<int16_t>(p) / 32768.0
                   : static_cast<double>(readLe<float>(p));
    }
    // Multi-channel input is downmixed by averaging.
    clip.samples[i] = acc / channels;
  }
  return clip;
}

void saveWav(const AudioClip& clip, const fs::path& path, WavEncoding encoding) {
  if (clip.samples.empty()) {
    throw ValidationError("cannot write empty clip " + clip.uttId);
  }
  for (double v : clip.samples) {
    if (!std::isfinite(v)) {
      throw ValidationError("non-finite sample in clip " + clip.uttId);
    }
  }
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  if (clip.sampleRate <= 0) {
    throw ValidationError("invalid sample rate");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  const bool pcm = encoding == WavEncoding::kPcm16;
  const uint16_t bits = pcm ? 16 : 32;
  const auto dataSize =
      static_cast<uint32_t>(clip.samples.size() * (bits / 8));
  out.write("RIFF", 4);
  writeLe<uint32_t>(out, 36 + dataSize);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  writeLe<uint32_t>(out, 16);
  writeLe<uint16_t>(out, pcm ? kFormatPcm : kFormatFloat);
  writeLe<uint16_t>(out, 1);
  writeLe<uint32_t>(out, static_cast<uint32_t>(clip.sampleRate));
  writeLe<uint32_t>(out, static_cast<uint32_t>(clip.sampleRate) * (bits / 8));
  writeLe<uint16_t>(out, bits / 8);
  writeLe<uint16_t>(out, bits);
  out.write("data", 4);
  writeLe<uint32_t>(out, dataSize);
  for (double v : clip.samples) {
    if (pcm) {
      const double q = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
      writeLe<int16_t>(out, static_cast<int16_t>(q));
    } else {
      writeLe<float>(out, static_cast<float>(v));
    }
  }
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

// -------------------------------------------------------------- resampling

namespace {

double besselI0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) {
      break;
    }
  }
  return sum;
}

constexpr double kResampleRolloff = 0.9;
constexpr double kResampleZeros = 32.0;
constexpr double kResampleBeta = 8.6;

} // namespace

AudioClip resample(const AudioClip& clip, int targetRate) {
  if (targetRate != kRate16k && targetRate != kRate24k) {
    throw ValidationError(
        "resample target must be 16000 or 24000, got " +
        std::to_string(targetRate));
  }
  if (clip.sampleRate <= 0) {
    throw ValidationError("clip has invalid sample rate");
  }
  if (clip.sampleRate == targetRate) {
    return clip;
  }
  const int64_t g = std::gcd(clip.sampleRate, targetRate);
  const int64_t up = targetRate / g;
  const int64_t down = clip.sampleRate / g;
  const auto inLen = static_cast<int64_t>(clip.samples.size());
  const int64_t outLen = (2 * inLen * up + down) / (2 * down);

  // Cutoff relative to the input Nyquist rate.
  const double fc =
      std::min(1.0, static_cast<double>(up) / down) * kResampleRolloff;
  const double halfWidth = kResampleZeros / fc;
  const auto taps = static_cast<int64_t>(std::ceil(halfWidth));
  const double i0Beta = besselI0(kResampleBeta);

  // table[phase][j] holds h(phase/up + taps - j) for j in [0, 2*taps].
  std::vector<std::vector<double>> table(up);
  for (int64_t p = 0; p < up; ++p) {
    auto& row = table[p];
    row.resize(2 * taps + 1);
    for (int64_t j = 0; j <= 2 * taps; ++j) {
      const double u = static_cast<double>(p) / up + static_cast<double>(taps - j);
      if (std::abs(u) >= halfWidth) {
        row[j] = 0.0;
        continue;
      }
      const double x = std::numbers::pi * fc * u;
      const double sinc = u == 0.0 ? 1.0 : std::sin(x) / x;
      const double r = u / halfWidth;
      const double win = besselI0(kResampleBeta * std::sqrt(1.0 - r * r)) / i0Beta;
      row[j] = fc * sinc * win;
    }
  }

  AudioClip out = clip;
  out.sampleRate = targetRate;
  out.samples.assign(outLen, 0.0);
  for (int64_t n = 0; n < outLen; ++n) {
    const int64_t num = n * down;
    const int64_t base = num / up;
    const int64_t phase = num % up;
    const auto& row = table[phase];
    double acc = 0.0;
    // Input index i = base - taps + j contributes h(t - i).
    const int64_t first = base - taps;
    const int64_t jLo = std::max<int64_t>(0, -first);
    const int64_t jHi = std::min<int64_t>(2 * taps, inLen - 1 - first);
    for (int64_t j = jLo; j <= jHi; ++j) {
      acc += clip.samples[first + j] * row[j];
    }
    out.samples[n] = acc;
  }
  return out;
}

// ----------------------------------------------------------------- spectra

MelConfig MelConfig::speech16k() {
  MelConfig cfg;
  cfg.nMels = 80;
  cfg.windowMs = 25.0;
  cfg.hopMs = 10.0;
  cfg.fftSize = 512;
  cfg.fMin = 20.0;
  cfg.fMax = 8000.0;
  return cfg;
}

int MelConfig::windowSamples(int sampleRate) const {
  return static_cast<int>(std::lround(windowMs * sampleRate / 1000.0));
}

int MelConfig::hopSamples(int sampleRate) const {
  return static_cast<int>(std::lround(hopMs * sampleRate / 1000.0));
}

void MelConfig::validate(int sampleRate) const {
  if (nMels <= 0 || fftSize <= 0 || (fftSize & (fftSize - 1)) != 0) {
    throw ValidationError("mel config needs nMels > 0 and power-of-two fftSize");
  }
  if (!(fMin >= 0.0 && fMin < fMax && fMax <= sampleRate / 2.0)) {
    throw ValidationError(
        "mel config requires 0 <= f_min < f_max <= sample_rate/2 (f_max=" +
        std::to_string(fMax) + ", rate=" + std::to_string(sampleRate) + ")");
  }
  const int win = windowSamples(sampleRate);
  if (win <= 0 || win > fftSize || hopSamples(sampleRate) <= 0) {
    throw ValidationError("mel window must fit in the FFT and hop must be > 0");
  }
}

int64_t stftFrameCount(int64_t numSamples, int hop) {
  return 1 + numSamples / hop;
}

RowMatrix powerSpectrogram(
    std::span<const double> samples, int fftSize, int hop, int window) {
  const auto total = static_cast<int64_t>(samples.size());
  const int64_t frames = stftFrameCount(total, hop);
  const int bins = fftSize / 2 + 1;
  const auto win = detail::paddedHann(window, fftSize);
  detail::RealFft fft(fftSize);
  RowMatrix out(frames, bins);
  std::vector<double> buf(fftSize);
  std::vector<detail::Complex> spec;
  for (int64_t f = 0; f < frames; ++f) {
    const int64_t start = f * hop - fftSize / 2;
    for (int n = 0; n < fftSize; ++n) {
      const int64_t i = start + n;
      buf[n] = (i >= 0 && i < total) ? samples[i] * win[n] : 0.0;
    }
    fft.forward(buf, spec);
    for (int k = 0; k < bins; ++k) {
      out(f, k) = std::norm(spec[k]);
    }
  }
  return out;
}

RowMatrix melFilterbank(const MelConfig& cfg, int sampleRate) {
  cfg.validate(sampleRate);
  auto toMel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto toHz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const int bins = cfg.fftSize / 2 + 1;
  const double melLo = toMel(cfg.fMin);
  const double melHi = toMel(cfg.fMax);
  std::vector<double> edges(cfg.nMels + 2);
  for (int i = 0; i < cfg.nMels + 2; ++i) {
    edges[i] = toHz(melLo + (melHi - melLo) * i / (cfg.nMels + 1));
  }
  RowMatrix fb = RowMatrix::Zero(bins, cfg.nMels);
  for (int k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * sampleRate / cfg.fftSize;
    for (int m = 0; m < cfg.nMels; ++m) {
      const double lo = edges[m];
      const double mid = edges[m + 1];
      const double hi = edges[m + 2];
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      fb(k, m) = w;
    }
  }
  return fb;
}

RowMatrix logMel(const AudioClip& clip, const MelConfig& cfg) {
  cfg.validate(clip.sampleRate);
  const int win = cfg.windowSamples(clip.sampleRate);
  const int hop = cfg.hopSamples(clip.sampleRate);
  if (static_cast<int64_t>(clip.samples.size()) < win) {
    throw ValidationError(
        "clip " + clip.uttId + " is shorter than one analysis window");
  }
  const RowMatrix power =
      powerSpectrogram(clip.samples, cfg.fftSize, hop, win);
  RowMatrix mel = power * melFilterbank(cfg, clip.sampleRate);
  return (mel.array() + kLogMelFloor).log().matrix();
}

double rms(std::span<const double> samples) {
  if (samples.empty()) {
    return 0.0;
  }
  double acc = 0.0;
  for (double v : samples) {
    acc += v * v;
  }
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

double peakAbs(std::span<const double> samples) {
  double m = 0.0;
  for (double v : samples) {
    m = std::max(m, std::abs(v));
  }
  return m;
}

} // namespace revoice
