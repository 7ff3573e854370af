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

#include "revoice/vocoder.h"

#include <cmath>
#include <numbers>

#include "revoice/error.h"
#include "revoice/rng.h"

namespace revoice {

using ag::Var;

namespace {

constexpr double kLreluSlope = 0.1;
constexpr int kContextKernel = 3;
constexpr int kMpdPostKernel = 3;

bool isPow2(int n) {
  return n > 0 && (n & (n - 1)) == 0;
}

} // namespace

// ------------------------------------------------------------------ config

int VocoderConfig::hopSamples() const {
  int p = 1;
  for (int f : ublockFactors) p *= f;
  return p;
}

VocoderConfig VocoderConfig::fullScale() {
  VocoderConfig c;
  c.featureDim = 1024;
  c.speakerDim = 256;
  c.hiddenDim = 512;
  c.iterEmbedDim = 128;
  c.mpdChannels = {32, 128, 512, 1024};
  return c;
}

VocoderConfig VocoderConfig::deskScale() {
  return VocoderConfig{};
}

VocoderConfig VocoderConfig::tiny() {
  VocoderConfig c;
  c.featureDim = 8;
  c.speakerDim = 4;
  c.hiddenDim = 32;
  c.iterEmbedDim = 8;
  c.mpdChannels = {4, 4};
  return c;
}

void VocoderConfig::validate() const {
  if (!(featureRateIn > 0.0) ||
      std::abs(upsampledRate - kUpsampleFactor * featureRateIn) > 1e-9) {
    throw ValidationError("vocoder: upsampled rate must be 4x the input feature rate");
  }
  if (ublockFactors.empty()) {
    throw ValidationError("vocoder: ublock factors are empty");
  }
  for (int f : ublockFactors) {
    if (f < 1) throw ValidationError("vocoder: ublock factors must be positive");
  }
  if (sampleRate <= 0 ||
      std::abs(hopSamples() * upsampledRate - static_cast<double>(sampleRate)) > 1e-6) {
    throw ValidationError(
        "vocoder: product of ublock factors (" + std::to_string(hopSamples()) + ") x " +
        std::to_string(upsampledRate) + " fps does not equal " + std::to_string(sampleRate) +
        " Hz");
  }
  if (nRefineIterations < 1) {
    throw ValidationError("vocoder: needs at least one refinement iteration");
  }
  if (!(lambdaGain > 0.0 && lambdaGain <= 1.0)) {
    throw ValidationError("vocoder: lambda_gain must lie in (0, 1]");
  }
  if (mpdPeriods.empty()) {
    throw ValidationError("vocoder: no discriminator periods");
  }
  for (int p : mpdPeriods) {
    if (p < 1) throw ValidationError("vocoder: discriminator periods must be positive");
  }
  if (stftResolutions.empty()) {
    throw ValidationError("vocoder: no STFT loss resolutions");
  }
  for (const auto& r : stftResolutions) {
    if (!isPow2(r.fftSize) || r.hop <= 0 || r.window <= 0 || r.window > r.fftSize) {
      throw ValidationError("vocoder: invalid STFT loss resolution");
    }
  }
  if (featureDim <= 0 || speakerDim <= 0 || hiddenDim <= 0 || iterEmbedDim <= 0) {
    throw ValidationError("vocoder dims must be positive");
  }
  if (mpdChannels.empty() || mpdKernel < 1 || mpdKernel % 2 == 0 || mpdStride < 1) {
    throw ValidationError("vocoder: invalid discriminator layout");
  }
  for (int c : mpdChannels) {
    if (c < 1) throw ValidationError("vocoder: discriminator channels must be positive");
  }
}

// ----------------------------------------------------------- discriminator

MultiPeriodDiscriminator::MultiPeriodDiscriminator(
    const VocoderConfig& config, nn::ParamSet& params, Rng& rng) {
  for (int p : config.mpdPeriods) {
    Branch b;
    b.period = p;
    const std::string prefix = "mpd.p" + std::to_string(p);
    int cin = 1;
    const size_t n = config.mpdChannels.size();
    for (size_t l = 0; l <= n; ++l) {
      const bool last = l == n;
      const int k = last ? kMpdPostKernel : config.mpdKernel;
      const int cout = last ? 1 : config.mpdChannels[l];
      const std::string name = prefix + ".l" + std::to_string(l);
      b.weights.push_back(params.create(
          name + ".w", nn::glorot(static_cast<Eigen::Index>(k) * cin, cout, k * cin, k * cout, rng)));
      b.biases.push_back(params.create(name + ".b", nn::Mat::Zero(1, cout)));
      b.strides.push_back(!last && l + 1 < n ? config.mpdStride : 1);
      cin = cout;
    }
    branches_.push_back(std::move(b));
  }
}

std::vector<int> MultiPeriodDiscriminator::periods() const {
  std::vector<int> out;
  for (const auto& b : branches_) out.push_back(b.period);
  return out;
}

MultiPeriodDiscriminator::Output MultiPeriodDiscriminator::operator()(const Var& wave) const {
  if (wave.cols() != 1 || wave.rows() < 1) {
    throw ValidationError("discriminator expects a [T x 1] waveform");
  }
  Output out;
  for (const auto& b : branches_) {
    const Eigen::Index t = wave.rows();
    const Eigen::Index rows = (t + b.period - 1) / b.period;
    Var x = rows * b.period == t ? wave : ag::padRows(wave, 0, rows * b.period - t);
    x = ag::reshape(x, rows, b.period);
    std::vector<Var> feats;
    for (size_t l = 0; l < b.weights.size(); ++l) {
      const Eigen::Index k = b.weights[l].rows() / (x.cols() / b.period);
      ag::ConvSpec spec;
      spec.batch = b.period;
      spec.stride = b.strides[l];
      spec.padLeft = static_cast<int>((k - 1) / 2);
      spec.padRight = static_cast<int>((k - 1) / 2);
      x = ag::conv1d(x, b.weights[l], b.biases[l], spec);
      if (l + 1 < b.weights.size()) {
        x = ag::leakyRelu(x, slope_);
        feats.push_back(x);
      }
    }
    out.features.push_back(std::move(feats));
    out.logits.push_back(x);
  }
  return out;
}

// ------------------------------------------------------------------- model

VocoderModel::VocoderModel(const VocoderConfig& config) : config_(config) {
  config_.validate();
  Rng rng(deriveSeed(config_.seed, 0x70C0));
  const int d = config_.featureDim;
  const int h = config_.hiddenDim;
  const int hop = config_.hopSamples();

  for (int s = 0; s < 2; ++s) {
    nn::Mat k(kUpsampleKernel, 1);
    k << 0.25, 0.75, 0.75, 0.25;
    k += nn::randomNormal(kUpsampleKernel, 1, 0.05, rng);
    const std::string name = "upsample." + std::to_string(s);
    upKernel_[s] = gen_.create(name + ".kernel", k);
    // Features are tanh-bounded; the positive offset keeps the first ReLU linear.
    upBias_[s] = gen_.create(name + ".bias", nn::Mat::Constant(1, 1, s == 0 ? 1.0 : 0.0));
  }
  film_ = FilmParams::create(gen_, "film_speaker", d, config_.speakerDim, rng);
  inWave_ = nn::Linear::create(gen_, "decoder.in_wave", hop, h, rng);
  inFeature_ = nn::Linear::create(gen_, "decoder.in_feature", d, h, rng, false);
  inCond_ = nn::Linear::create(gen_, "decoder.in_cond", d, h, rng, false);
  iterProj_ = gen_.create(
      "decoder.iter_proj",
      nn::glorot(config_.iterEmbedDim, h, config_.iterEmbedDim, h, rng));
  for (int c = 0; c < 2; ++c) {
    context_[c] = nn::Conv1d::create(
        gen_, "decoder.context." + std::to_string(c), h, h, kContextKernel, rng);
  }
  outWave_ = nn::Linear::create(gen_, "decoder.out_wave", h, 2 * hop, rng);
  skip_ = gen_.create("decoder.skip", nn::Mat::Zero(hop, hop));

  olaWindow_.resize(1, 2 * hop);
  for (int n = 0; n < 2 * hop; ++n) {
    olaWindow_(0, n) = 0.5 - 0.5 * std::cos(std::numbers::pi * n / hop);
  }

  Rng discRng(deriveSeed(config_.seed, 0xD15C));
  mpd_ = MultiPeriodDiscriminator(config_, disc_, discRng);
}

Var VocoderModel::upsample(const Var& features) const {
  if (features.rows() == 0) {
    throw ValidationError("upsample_features: input has no frames");
  }
  if (features.cols() != config_.featureDim) {
    throw ValidationError(
        "upsample_features: expected D=" + std::to_string(config_.featureDim) + ", got " +
        std::to_string(features.cols()));
  }
  Var x = features;
  for (int s = 0; s < 2; ++s) {
    x = ag::relu(ag::convTranspose1dShared(x, upKernel_[s], upBias_[s], 2, 1));
  }
  return x;
}

Var VocoderModel::conditionSpeaker(const Var& upsampled, const Var& speaker) const {
  return film(upsampled, speaker, film_);
}

Var VocoderModel::refine(
    const Var& y, const Var& upsampled, const Var& cond, int iteration) const {
  const int hop = config_.hopSamples();
  const Eigen::Index frames = upsampled.rows();
  const Var z = ag::reshape(y, frames, hop);
  const Var embed = ag::matmul(
      ag::constant(nn::sinusoidalEmbedding(iteration, config_.iterEmbedDim)), iterProj_);
  Var h = ag::add(ag::add(inWave_(z), inFeature_(upsampled)), inCond_(cond));
  h = ag::leakyRelu(ag::addRow(h, embed), kLreluSlope);
  for (int c = 0; c < 2; ++c) {
    h = ag::add(h, ag::leakyRelu(context_[c](h, c + 1), kLreluSlope));
  }
  const Var framesOut = ag::mul(
      outWave_(h), ag::constant(olaWindow_.replicate(frames, 1)));
  const Var head = ag::sliceCols(framesOut, 0, hop);
  const Var tail = ag::sliceRows(ag::padRows(ag::sliceCols(framesOut, hop, hop), 1, 0), 0, frames);
  const Var noise = ag::add(ag::matmul(z, skip_), ag::add(head, tail));
  return ag::gainNormalize(
      ag::reshape(ag::sub(z, noise), frames * hop, 1), config_.lambdaGain);
}

Var VocoderModel::synthesize(const Var& features, const Var& speaker, uint64_t seed) const {
  if (speaker.rows() != 1 || speaker.cols() != config_.speakerDim) {
    throw ValidationError(
        "synthesize: speaker embedding must have " + std::to_string(config_.speakerDim) +
        " entries");
  }
  const Var up = upsample(features);
  const Var cond = conditionSpeaker(up, speaker);
  const Eigen::Index total = up.rows() * config_.hopSamples();
  Rng rng(seed);
  nn::Mat noise(total, 1);
  for (Eigen::Index i = 0; i < total; ++i) {
    noise(i, 0) = rng.normal();
  }
  Var y = ag::gainNormalize(ag::constant(std::move(noise)), config_.lambdaGain);
  for (int t = 0; t < config_.nRefineIterations; ++t) {
    y = refine(y, up, cond, t);
  }
  return y;
}

// ------------------------------------------------------------ free helpers

SpeechFeatures upsampleFeatures(const SpeechFeatures& features, const VocoderModel& model) {
  if (std::abs(features.frameRate - model.config().featureRateIn) > 1e-9) {
    throw ValidationError("upsample_features: input must be at 25 frames per second");
  }
  SpeechFeatures out = features;
  out.values = model.upsample(ag::constant(features.values)).value();
  out.frameRate = model.config().upsampledRate;
  return out;
}

SpeechFeatures conditionSpeaker(
    const SpeechFeatures& upsampled, const SpeakerEmbedding& speaker, const VocoderModel& model) {
  SpeechFeatures out = upsampled;
  out.values = model
                   .conditionSpeaker(
                       ag::constant(upsampled.values),
                       ag::constant(RowMatrix(speaker.values.transpose())))
                   .value();
  return out;
}

AudioClip synthesize(
    const VocoderModel& model,
    const SpeechFeatures& features,
    const SpeakerEmbedding& speaker,
    uint64_t seed) {
  const Var y = model.synthesize(
      ag::constant(features.values), ag::constant(RowMatrix(speaker.values.transpose())), seed);
  AudioClip clip;
  clip.sampleRate = model.config().sampleRate;
  clip.samples.assign(y.value().data(), y.value().data() + y.value().size());
  return clip;
}

std::vector<double> gainNormalize(std::span<const double> y, double lambda) {
  double m = 0.0;
  for (double v : y) m = std::max(m, std::abs(v));
  if (!(m > 0.0)) {
    throw ValidationError("gain_normalize: input is all zeros");
  }
  std::vector<double> out(y.size());
  for (size_t i = 0; i < y.size(); ++i) out[i] = lambda * y[i] / m;
  return out;
}

// ------------------------------------------------------------------ losses

Var multiResolutionStftLoss(
    const Var& y,
    const Var& s,
    std::span<const StftResolution> resolutions,
    StftLossReport* report) {
  if (y.rows() != s.rows() || y.cols() != 1 || s.cols() != 1) {
    throw ValidationError(
        "stft loss: waveforms must be [T x 1] of equal length (" + std::to_string(y.rows()) +
        " vs " + std::to_string(s.rows()) + ")");
  }
  if (resolutions.empty()) {
    throw ValidationError("stft loss: no resolutions");
  }
  Var total;
  StftLossReport r;
  const double inv = 1.0 / static_cast<double>(resolutions.size());
  for (const auto& res : resolutions) {
    const Var ms = stftMagnitude(s, res.fftSize, res.hop, res.window);
    const Var my = stftMagnitude(y, res.fftSize, res.hop, res.window);
    const Var sc = ag::divScalar(ag::frobenius(ag::sub(ms, my)), ag::frobenius(ms));
    const Var mag = ag::mean(ag::abs(ag::sub(ag::log(ms), ag::log(my))));
    r.spectralConvergence += sc.scalar() * inv;
    r.logMagnitude += mag.scalar() * inv;
    const Var term = ag::scale(ag::add(sc, mag), inv);
    total = total.defined() ? ag::add(total, term) : term;
  }
  r.total = r.spectralConvergence + r.logMagnitude;
  if (report != nullptr) *report = r;
  return total;
}

namespace {

Var sumVars(const std::vector<Var>& terms) {
  Var total = terms.at(0);
  for (size_t i = 1; i < terms.size(); ++i) total = ag::add(total, terms[i]);
  return total;
}

} // namespace

Var discriminatorLoss(
    const MultiPeriodDiscriminator::Output& real, const MultiPeriodDiscriminator::Output& fake) {
  std::vector<Var> terms;
  for (size_t b = 0; b < real.logits.size(); ++b) {
    terms.push_back(ag::mean(ag::square(ag::addScalar(real.logits[b], -1.0))));
    terms.push_back(ag::mean(ag::square(fake.logits[b])));
  }
  return sumVars(terms);
}

Var generatorAdversarialLoss(const MultiPeriodDiscriminator::Output& fake) {
  std::vector<Var> terms;
  for (const auto& l : fake.logits) {
    terms.push_back(ag::mean(ag::square(ag::addScalar(l, -1.0))));
  }
  return sumVars(terms);
}

Var featureMatchingLoss(
    const MultiPeriodDiscriminator::Output& real, const MultiPeriodDiscriminator::Output& fake) {
  std::vector<Var> terms;
  for (size_t b = 0; b < real.features.size(); ++b) {
    for (size_t l = 0; l < real.features[b].size(); ++l) {
      const Var target = ag::constant(real.features[b][l].value());
      terms.push_back(ag::mean(ag::abs(ag::sub(fake.features[b][l], target))));
    }
  }
  return sumVars(terms);
}

VocoderLossReport vocoderLosses(
    std::span<const double> y, std::span<const double> s, const VocoderModel& model) {
  if (y.size() != s.size()) {
    throw ValidationError(
        "vocoder_losses: length mismatch (" + std::to_string(y.size()) + " vs " +
        std::to_string(s.size()) + ")");
  }
  if (y.empty()) {
    throw ValidationError("vocoder_losses: empty waveform");
  }
  const auto n = static_cast<Eigen::Index>(y.size());
  const Var yv = ag::constant(Eigen::Map<const nn::Mat>(y.data(), n, 1));
  const Var sv = ag::constant(Eigen::Map<const nn::Mat>(s.data(), n, 1));
  VocoderLossReport r;
  multiResolutionStftLoss(yv, sv, model.config().stftResolutions, &r.stft);
  const auto real = model.discriminator()(sv);
  const auto fake = model.discriminator()(yv);
  r.generatorAdversarial = generatorAdversarialLoss(fake).scalar();
  r.featureMatching = featureMatchingLoss(real, fake).scalar();
  r.discriminator = discriminatorLoss(real, fake).scalar();
  return r;
}

} // namespace revoice
