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

#include "revoice/cleaner.h"

#include <cmath>

#include "revoice/error.h"
#include "revoice/rng.h"

namespace revoice {

using ag::Var;

// -------------------------------------------------------------------- FiLM

FilmParams FilmParams::create(
    nn::ParamSet& params, const std::string& name, int featureDim, int condDim, Rng& rng) {
  FilmParams f;
  f.conv1 = nn::Conv1d::create(params, name + ".conv1", featureDim, condDim, kFilmKernel, rng);
  f.conv2 = nn::Conv1d::create(params, name + ".conv2", condDim, featureDim, kFilmKernel, rng);
  return f;
}

Var film(const Var& a, const Var& b, const FilmParams& params) {
  if (a.cols() != params.featureDim()) {
    throw ValidationError(
        "film: input has " + std::to_string(a.cols()) + " channels, expected " +
        std::to_string(params.featureDim()));
  }
  if (b.rows() != 1 || b.cols() != params.condDim()) {
    throw ValidationError(
        "film: conditioning vector must have " + std::to_string(params.condDim()) + " entries");
  }
  Var h = ag::leakyRelu(params.conv1(a), params.lreluSlope);
  return params.conv2(ag::addRow(h, b));
}

RowMatrix film(const RowMatrix& a, const Eigen::RowVectorXd& b, const FilmParams& params) {
  return film(ag::constant(a), ag::constant(RowMatrix(b)), params).value();
}

// ------------------------------------------------------------------ config

CleanerConfig CleanerConfig::fullScale() {
  CleanerConfig c;
  c.numBlocks = 4;
  c.blockDim = 128;
  c.attnHidden = 512;
  c.numHeads = 8;
  c.speechDim = 1024;
  c.textDim = 512;
  c.speakerDim = 256;
  c.convKernel = 3;
  return c;
}

CleanerConfig CleanerConfig::deskScale() {
  return CleanerConfig{};
}

CleanerConfig CleanerConfig::tiny() {
  CleanerConfig c;
  c.numBlocks = 2;
  c.blockDim = 8;
  c.attnHidden = 8;
  c.numHeads = 2;
  c.speechDim = 8;
  c.textDim = 4;
  c.speakerDim = 4;
  c.convKernel = 3;
  c.ffMultiplier = 2;
  c.iterEmbedDim = 8;
  return c;
}

void CleanerConfig::validate() const {
  if (numBlocks < 1 || numIterations < 1) {
    throw ValidationError("cleaner needs at least one block and one iteration");
  }
  if (blockDim <= 0 || attnHidden <= 0 || speechDim <= 0 || textDim <= 0 ||
      speakerDim <= 0 || iterEmbedDim <= 0 || ffMultiplier <= 0) {
    throw ValidationError("cleaner dims must be positive");
  }
  if (numHeads < 1 || attnHidden % numHeads != 0 || blockDim % numHeads != 0) {
    throw ValidationError("attention widths must be divisible by the head count");
  }
  if (postnetLayers < 1 || postnetKernel % 2 == 0 || convKernel % 2 == 0) {
    throw ValidationError("post-net needs >= 1 layer and kernels must be odd");
  }
}

int blockDilation(int blockIndex) {
  return 1 << (blockIndex % 2);
}

// ------------------------------------------------------------------- model

Var CleanerModel::Attention::operator()(const Var& query, const Var& memory) const {
  const Var qs = q(query);
  const Var ks = k(memory);
  const Var vs = v(memory);
  const Eigen::Index width = qs.cols() / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(width));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Var qh = ag::sliceCols(qs, h * width, width);
    const Var kh = ag::sliceCols(ks, h * width, width);
    const Var vh = ag::sliceCols(vs, h * width, width);
    const Var weights = ag::softmaxRows(ag::scale(ag::matmul(qh, ag::transpose(kh)), inv));
    outs.push_back(ag::matmul(weights, vh));
  }
  return o(heads == 1 ? outs[0] : ag::concatCols(outs));
}

Var CleanerModel::FeedForward::operator()(const Var& x) const {
  return out(ag::silu(in(norm(x))));
}

CleanerModel::CleanerModel(const CleanerConfig& config) : config_(config) {
  config_.validate();
  Rng rng(deriveSeed(config_.seed, 0xC1EA));
  const int db = config_.blockDim;
  const int d = config_.speechDim;

  inputProj_ = nn::Linear::create(params_, "input_proj", d, db, rng);
  textProj_ = nn::Linear::create(params_, "text_proj", config_.textDim, db, rng);
  speakerProj_ = nn::Linear::create(params_, "speaker_proj", config_.speakerDim, db, rng);
  filmSpeaker_ = FilmParams::create(params_, "film_speaker", db, db, rng);
  filmIteration_ = FilmParams::create(params_, "film_iteration", db, config_.iterEmbedDim, rng);

  auto makeAttention = [&](const std::string& name, int hidden, int heads) {
    Attention a;
    a.q = nn::Linear::create(params_, name + ".q", db, hidden, rng);
    a.k = nn::Linear::create(params_, name + ".k", db, hidden, rng);
    a.v = nn::Linear::create(params_, name + ".v", db, hidden, rng);
    a.o = nn::Linear::create(params_, name + ".o", hidden, db, rng);
    a.heads = heads;
    return a;
  };
  auto makeFeedForward = [&](const std::string& name) {
    FeedForward f;
    f.norm = nn::LayerNorm::create(params_, name + ".norm", db);
    f.in = nn::Linear::create(params_, name + ".in", db, db * config_.ffMultiplier, rng);
    f.out = nn::Linear::create(params_, name + ".out", db * config_.ffMultiplier, db, rng);
    return f;
  };

  for (int n = 0; n < config_.numBlocks; ++n) {
    const std::string p = "blocks." + std::to_string(n);
    Block b;
    b.crossAttn = makeAttention(p + ".cross_attn", config_.attnHidden, config_.numHeads);
    b.crossNorm = nn::LayerNorm::create(params_, p + ".cross_norm", db);
    b.ff1 = makeFeedForward(p + ".ff1");
    b.selfNorm = nn::LayerNorm::create(params_, p + ".self_norm", db);
    b.selfAttn = makeAttention(p + ".self_attn", db, config_.numHeads);
    b.convNorm = nn::LayerNorm::create(params_, p + ".conv_norm", db);
    b.convIn = nn::Linear::create(params_, p + ".conv_in", db, 2 * db, rng);
    b.depthwiseW = params_.create(
        p + ".depthwise.w",
        nn::glorot(config_.convKernel, db, config_.convKernel, config_.convKernel, rng));
    b.depthwiseB = params_.create(p + ".depthwise.b", nn::Mat::Zero(1, db));
    b.convMidNorm = nn::LayerNorm::create(params_, p + ".conv_mid_norm", db);
    b.convOut = nn::Linear::create(params_, p + ".conv_out", db, db, rng);
    b.ff2 = makeFeedForward(p + ".ff2");
    b.finalNorm = nn::LayerNorm::create(params_, p + ".final_norm", db);
    b.dilation = blockDilation(n);
    blocks_.push_back(std::move(b));
  }

  outputProj_ = nn::Linear::create(params_, "output_proj", db, d, rng);
  for (int l = 0; l < config_.postnetLayers; ++l) {
    postnet_.push_back(nn::Conv1d::create(
        params_, "postnet." + std::to_string(l), d, d, config_.postnetKernel, rng));
  }
}

Var CleanerModel::runBlock(const Block& b, const Var& h, const Var& cond) const {
  // Cross attention with the speech frames as queries, then layer norm.
  Var x = b.crossNorm(ag::add(h, b.crossAttn(h, cond)));

  // Conformer-style sandwich.
  x = ag::add(x, ag::scale(b.ff1(x), 0.5));
  const Var normed = b.selfNorm(x);
  x = ag::add(x, b.selfAttn(normed, normed));

  const Var gated = b.convIn(b.convNorm(x));
  const Eigen::Index db = x.cols();
  Var conv = ag::mul(
      ag::sliceCols(gated, 0, db), ag::sigmoid(ag::sliceCols(gated, db, db)));
  conv = ag::depthwiseConv1d(conv, b.depthwiseW, b.depthwiseB, b.dilation);
  conv = b.convOut(ag::silu(b.convMidNorm(conv)));
  x = ag::add(x, conv);

  x = ag::add(x, ag::scale(b.ff2(x), 0.5));
  return b.finalNorm(x);
}

CleanerModel::Outputs CleanerModel::forward(
    const Var& x, const Var& text, const Var& speaker, int iterations) const {
  if (x.rows() == 0) {
    throw ValidationError("clean_features: input has no frames");
  }
  if (x.cols() != config_.speechDim) {
    throw ValidationError(
        "clean_features: expected D=" + std::to_string(config_.speechDim) + ", got " +
        std::to_string(x.cols()));
  }
  if (text.rows() < 1 || text.cols() != config_.textDim) {
    throw ValidationError("clean_features: text condition must be [M x W] with M >= 1");
  }
  if (speaker.rows() != 1 || speaker.cols() != config_.speakerDim) {
    throw ValidationError("clean_features: speaker embedding must have Q entries");
  }
  const int iters = iterations > 0 ? iterations : config_.numIterations;

  // The text/speaker projection is iteration-independent.
  const Var textProj = textProj_(text);
  const Var speakerProj = speakerProj_(speaker);
  const Var baseCond = film(textProj, speakerProj, filmSpeaker_);

  Outputs out;
  Var current = x;
  for (int i = 0; i < iters; ++i) {
    auto [pre, post] = iterate(current, baseCond, i);
    out.prePostnet.push_back(pre);
    out.postPostnet.push_back(post);
    current = post;
  }
  return out;
}

std::pair<Var, Var> CleanerModel::iterate(const Var& current, const Var& baseCond, int i) const {
  const Var iterEmbed =
      ag::constant(nn::sinusoidalEmbedding(static_cast<double>(i), config_.iterEmbedDim));
  const Var cond = film(baseCond, iterEmbed, filmIteration_);
  Var h = inputProj_(current);
  for (const auto& block : blocks_) {
    h = runBlock(block, h, cond);
  }
  const Var pre = outputProj_(h);
  Var residual = pre;
  for (size_t l = 0; l < postnet_.size(); ++l) {
    residual = postnet_[l](residual);
    if (l + 1 < postnet_.size()) {
      residual = ag::tanh(residual);
    }
  }
  return {pre, ag::add(pre, residual)};
}

RowMatrix CleanerModel::step(
    const RowMatrix& current, const RowMatrix& text, const RowMatrix& speaker,
    int iteration) const {
  if (current.cols() != config_.speechDim || text.cols() != config_.textDim ||
      speaker.rows() != 1 || speaker.cols() != config_.speakerDim) {
    throw ValidationError("cleaner step: input dims do not match the config");
  }
  const Var baseCond = film(
      textProj_(ag::constant(text)), speakerProj_(ag::constant(speaker)), filmSpeaker_);
  return iterate(ag::constant(current), baseCond, iteration).second.value();
}

SpeechFeatures CleanerModel::clean(
    const SpeechFeatures& x,
    const TextCondition& text,
    const SpeakerEmbedding& speaker,
    int iterations) const {
  const Var xs = ag::constant(x.values);
  const Var ts = ag::constant(text.values);
  const Var ds = ag::constant(RowMatrix(speaker.values.transpose()));
  const auto outputs = forward(xs, ts, ds, iterations);
  SpeechFeatures result = x;
  result.values = outputs.postPostnet.back().value();
  return result;
}

SpeechFeatures cleanFeatures(
    const CleanerModel& model,
    const SpeechFeatures& x,
    const TextCondition& text,
    const SpeakerEmbedding& speaker) {
  return model.clean(x, text, speaker);
}

// -------------------------------------------------------------------- loss

namespace {

struct Terms {
  double l1, l2sq, sc;
  double total() const {
    return l1 + l2sq + sc;
  }
};

Terms lossTerms(const RowMatrix& target, const RowMatrix& pred, double targetEnergy) {
  if (target.rows() != pred.rows() || target.cols() != pred.cols()) {
    throw ValidationError("cleaner loss: prediction and target shapes differ");
  }
  const RowMatrix diff = target - pred;
  const double l2 = diff.squaredNorm();
  return {diff.cwiseAbs().sum(), l2, l2 / targetEnergy};
}

double targetEnergyOf(const RowMatrix& target) {
  const double e = target.squaredNorm();
  if (e == 0.0) {
    throw ValidationError("cleaner loss: target has zero norm");
  }
  return e;
}

} // namespace

CleanerLossReport cleanerLoss(
    const RowMatrix& target, std::span<const CleanerPrediction> outputs) {
  const double energy = targetEnergyOf(target);
  CleanerLossReport report;
  for (const auto& o : outputs) {
    const Terms pre = lossTerms(target, o.prePostnet, energy);
    const Terms post = lossTerms(target, o.postPostnet, energy);
    report.l1 += pre.l1 + post.l1;
    report.l2sq += pre.l2sq + post.l2sq;
    report.sc += pre.sc + post.sc;
    report.perIteration.push_back({pre.total(), post.total()});
  }
  report.total = report.l1 + report.l2sq + report.sc;
  return report;
}

Var cleanerLoss(
    const Var& target, const CleanerModel::Outputs& outputs, CleanerLossReport* report) {
  const double energy = targetEnergyOf(target.value());
  if (outputs.prePostnet.size() != outputs.postPostnet.size() || outputs.prePostnet.empty()) {
    throw ValidationError("cleaner loss: malformed outputs");
  }
  Var total;
  CleanerLossReport r;
  auto term = [&](const Var& pred, double& iterTotal) {
    const Var diff = ag::sub(target, pred);
    const Var l1 = ag::sumAbs(diff);
    const Var l2 = ag::sumSquares(diff);
    const Var sc = ag::scale(l2, 1.0 / energy);
    const Var t = ag::add(ag::add(l1, l2), sc);
    r.l1 += l1.scalar();
    r.l2sq += l2.scalar();
    r.sc += sc.scalar();
    iterTotal = t.scalar();
    total = total.defined() ? ag::add(total, t) : t;
  };
  for (size_t i = 0; i < outputs.prePostnet.size(); ++i) {
    IterationLoss it;
    term(outputs.prePostnet[i], it.prePostnet);
    term(outputs.postPostnet[i], it.postPostnet);
    r.perIteration.push_back(it);
  }
  r.total = r.l1 + r.l2sq + r.sc;
  if (report != nullptr) {
    *report = std::move(r);
  }
  return total;
}

FrameCrop cropTrainingFrames(
    const SpeechFeatures& clean, const SpeechFeatures& degraded, uint64_t seed, int nFrames) {
  if (nFrames < 1) {
    throw ValidationError("crop length must be positive");
  }
  if (clean.frames() != degraded.frames() || clean.dim() != degraded.dim()) {
    throw ValidationError("clean and degraded features are not frame-aligned");
  }
  if (clean.frames() < nFrames) {
    throw ValidationError(
        "utterance has " + std::to_string(clean.frames()) + " frames, fewer than the crop of " +
        std::to_string(nFrames));
  }
  Rng rng(seed);
  FrameCrop crop;
  crop.offset = rng.uniformInt(0, clean.frames() - nFrames);
  crop.clean = clean;
  crop.degraded = degraded;
  crop.clean.values = clean.values.middleRows(crop.offset, nFrames);
  crop.degraded.values = degraded.values.middleRows(crop.offset, nFrames);
  return crop;
}

} // namespace revoice
