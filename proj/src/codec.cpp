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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include <unistd.h>

#include "fft_util.h"
#include "revoice/degrade.h"
#include "revoice/error.h"

namespace revoice {

namespace fs = std::filesystem;

namespace {

constexpr double kALawA = 87.6;
constexpr double kMuLaw = 255.0;
constexpr double kTransitionHz = 500.0;

double alawCompress(double x) {
  const double a = std::min(std::abs(x), 1.0);
  const double denom = 1.0 + std::log(kALawA);
  const double y = a < 1.0 / kALawA ? kALawA * a / denom
                                    : (1.0 + std::log(kALawA * a)) / denom;
  return std::copysign(y, x);
}

double alawExpand(double y) {
  const double a = std::abs(y);
  const double denom = 1.0 + std::log(kALawA);
  const double x = a < 1.0 / denom ? a * denom / kALawA
                                   : std::exp(a * denom - 1.0) / kALawA;
  return std::copysign(x, y);
}

double mulawCompress(double x) {
  const double a = std::min(std::abs(x), 1.0);
  return std::copysign(std::log1p(kMuLaw * a) / std::log1p(kMuLaw), x);
}

double mulawExpand(double y) {
  return std::copysign(std::expm1(std::abs(y) * std::log1p(kMuLaw)) / kMuLaw, y);
}

/// Mid-rise uniform quantizer on [-1, 1] with 2^bits levels.
double quantize(double y, int bits) {
  const double levels = std::ldexp(1.0, bits - 1);
  const double q = (std::floor(y * levels) + 0.5) / levels;
  return std::clamp(q, -1.0 + 0.5 / levels, 1.0 - 0.5 / levels);
}

void lowPass(std::vector<double>& x, int sampleRate, double cutoffHz) {
  const int n = detail::nextPow2(static_cast<int>(x.size()) + 2048);
  detail::RealFft fft(n);
  std::vector<double> buf(n, 0.0);
  std::copy(x.begin(), x.end(), buf.begin());
  std::vector<detail::Complex> spec;
  fft.forward(buf, spec);
  for (size_t k = 0; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) * sampleRate / n;
    double g = 1.0;
    if (f >= cutoffHz + kTransitionHz) {
      g = 0.0;
    } else if (f > cutoffHz) {
      g = 0.5 + 0.5 * std::cos(std::numbers::pi * (f - cutoffHz) / kTransitionHz);
    }
    spec[k] *= g;
  }
  fft.inverse(spec, buf);
  std::copy_n(buf.begin(), x.size(), x.begin());
}

std::string shellQuote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
        ("revoice-codec-" + std::to_string(::getpid()) + "-" +
         std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

} // namespace

SurrogateCodecBackend::Params SurrogateCodecBackend::paramsFor(const CodecSpec& spec) {
  spec.validate();
  const double br = spec.bitrate;
  switch (spec.codec) {
    case Codec::kMp3:
      if (br <= 16e3) return {5000.0, 7};
      if (br <= 32e3) return {8000.0, 8};
      if (br <= 64e3) return {11000.0, 10};
      return {-1.0, 12};
    case Codec::kVorbis:
      if (br <= 32e3) return {9000.0, 9};
      if (br <= 48e3) return {11000.0, 10};
      return {-1.0, 11};
    case Codec::kALaw:
      return {-1.0, 8};
    case Codec::kAmrWb:
      if (br <= 8.85e3) return {7000.0, 5};
      if (br <= 15.85e3) return {7000.0, 6};
      return {7000.0, 7};
    case Codec::kOpus:
      if (br <= 8e3) return {4000.0, 6};
      if (br <= 16e3) return {6000.0, 7};
      if (br <= 32e3) return {10000.0, 9};
      if (br <= 64e3) return {-1.0, 11};
      return {-1.0, 13};
  }
  return {-1.0, 16};
}

AudioClip SurrogateCodecBackend::roundTrip(
    const AudioClip& clip, const CodecSpec& spec) const {
  const Params p = paramsFor(spec);
  AudioClip out = clip;
  const bool alaw = spec.codec == Codec::kALaw;
  for (double& v : out.samples) {
    v = alaw ? alawExpand(quantize(alawCompress(v), p.bits))
             : mulawExpand(quantize(mulawCompress(v), p.bits));
  }
  if (p.cutoffHz > 0.0 && p.cutoffHz < clip.sampleRate / 2.0) {
    lowPass(out.samples, clip.sampleRate, p.cutoffHz);
  }
  return out;
}

bool ExternalCodecBackend::available() const {
  const std::string cmd = shellQuote(ffmpeg_) + " -version > /dev/null 2>&1";
  return std::system(cmd.c_str()) == 0;
}

AudioClip ExternalCodecBackend::roundTrip(
    const AudioClip& clip, const CodecSpec& spec) const {
  spec.validate();
  if (!available()) {
    throw BackendError(
        "external codec backend: '" + ffmpeg_ + "' is not runnable; cannot apply " +
        codecName(spec.codec));
  }
  std::string encoder, ext, extra;
  switch (spec.codec) {
    case Codec::kMp3: encoder = "libmp3lame"; ext = "mp3"; break;
    case Codec::kVorbis: encoder = "libvorbis"; ext = "ogg"; break;
    case Codec::kALaw: encoder = "pcm_alaw"; ext = "wav"; extra = "-ar 8000"; break;
    case Codec::kAmrWb: encoder = "libvo_amrwbenc"; ext = "amr"; extra = "-ar 16000"; break;
    case Codec::kOpus: encoder = "libopus"; ext = "opus"; break;
  }
  TempDir tmp;
  const fs::path in = tmp.path / "in.wav";
  const fs::path enc = tmp.path / ("enc." + ext);
  const fs::path dec = tmp.path / "dec.wav";
  saveWav(clip, in, WavEncoding::kFloat32);
  std::ostringstream encodeCmd;
  encodeCmd << shellQuote(ffmpeg_) << " -nostdin -loglevel error -y -i "
            << shellQuote(in.string()) << " -ac 1 " << extra << " -c:a " << encoder;
  if (spec.codec != Codec::kALaw) {
    encodeCmd << " -b:a " << static_cast<long>(spec.bitrate);
  }
  encodeCmd << " " << shellQuote(enc.string());
  if (std::system(encodeCmd.str().c_str()) != 0) {
    throw BackendError("ffmpeg failed to encode with " + encoder);
  }
  std::ostringstream decodeCmd;
  decodeCmd << shellQuote(ffmpeg_) << " -nostdin -loglevel error -y -i "
            << shellQuote(enc.string()) << " -ac 1 -ar " << clip.sampleRate
            << " -c:a pcm_f32le " << shellQuote(dec.string());
  if (std::system(decodeCmd.str().c_str()) != 0) {
    throw BackendError("ffmpeg failed to decode " + codecName(spec.codec));
  }
  AudioClip out = loadWav(dec);
  out.uttId = clip.uttId;
  out.speakerId = clip.speakerId;
  out.transcript = clip.transcript;
  return out;
}

std::unique_ptr<CodecBackend> makeCodecBackend(const std::string& name) {
  if (name == "surrogate") {
    return std::make_unique<SurrogateCodecBackend>();
  }
  if (name == "external") {
    return std::make_unique<ExternalCodecBackend>();
  }
  throw ValidationError("unknown codec backend '" + name + "'");
}

int64_t estimateLag(
    std::span<const double> reference, std::span<const double> processed, int64_t maxLag) {
  if (reference.empty() || processed.empty()) {
    return 0;
  }
  const auto total = static_cast<int64_t>(std::max(reference.size(), processed.size()));
  const int n = detail::nextPow2(static_cast<int>(total + maxLag + 1));
  detail::RealFft fft(n);
  std::vector<double> a(n, 0.0), b(n, 0.0);
  std::copy(reference.begin(), reference.end(), a.begin());
  std::copy(processed.begin(), processed.end(), b.begin());
  std::vector<detail::Complex> fa, fb;
  fft.forward(a, fa);
  fft.forward(b, fb);
  for (size_t k = 0; k < fa.size(); ++k) {
    fb[k] *= std::conj(fa[k]);
  }
  std::vector<double> corr;
  fft.inverse(fb, corr);
  // corr[lag mod n] = sum_i ref[i] * proc[i + lag].
  int64_t best = 0;
  double bestVal = -std::numeric_limits<double>::infinity();
  for (int64_t lag = -maxLag; lag <= maxLag; ++lag) {
    const double v = corr[static_cast<size_t>((lag + n) % n)];
    if (v > bestVal) {
      bestVal = v;
      best = lag;
    }
  }
  return best;
}

AudioClip applyCodec(
    const AudioClip& clip, const CodecSpec& spec, const CodecBackend& backend) {
  spec.validate();
  AudioClip processed = backend.roundTrip(clip, spec);
  if (processed.sampleRate != clip.sampleRate) {
    processed = resample(processed, clip.sampleRate);
  }
  const int64_t maxLag = clip.sampleRate / 10;
  const int64_t lag = estimateLag(clip.samples, processed.samples, maxLag);
  AudioClip out = clip;
  const auto len = static_cast<int64_t>(clip.samples.size());
  const auto plen = static_cast<int64_t>(processed.samples.size());
  for (int64_t i = 0; i < len; ++i) {
    const int64_t src = i + lag;
    out.samples[i] = (src >= 0 && src < plen) ? processed.samples[src] : 0.0;
  }
  return out;
}

} // namespace revoice
