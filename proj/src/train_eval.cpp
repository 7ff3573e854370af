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

#include "revoice/train_eval.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "revoice/config.h"
#include "revoice/error.h"
#include "revoice/rng.h"

namespace revoice {

using ag::Var;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kEvalRms = 0.1;
constexpr double kMaxSnrProxyDb = 100.0;
constexpr double kCi95 = 1.96;

/// Runs fn(i) for i in [0, n) on up to `workers` threads; results must be
/// written to per-index slots by the caller.
template <typename Fn>
void parallelFor(size_t n, int workers, Fn&& fn) {
  const size_t threads = std::min<size_t>(std::max(1, workers), n);
  if (threads <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (size_t i = t; i < n; i += threads) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string resolvePath(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).lexically_normal().string();
}

RowMatrix speakerRow(const SpeakerEmbedding& d) {
  return RowMatrix(d.values.transpose());
}

bool allFinite(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::vector<double> toRate24k(const AudioClip& clip) {
  return clip.sampleRate == kRate24k ? clip.samples : resample(clip, kRate24k).samples;
}

} // namespace

// ----------------------------------------------------------------- config

TrainConfig TrainConfig::cleanerDefaults() {
  return TrainConfig{};
}

TrainConfig TrainConfig::vocoderDefaults() {
  TrainConfig c;
  c.steps = 1500;
  c.batchSize = 1;
  c.advStartStep = 1000;
  return c;
}

void TrainConfig::validate() const {
  if (steps < 1 || batchSize < 1) {
    throw ValidationError("steps and batch_size must be >= 1");
  }
  if (!(lr > 0.0) || !(discLr > 0.0)) {
    throw ValidationError("learning rates must be positive");
  }
  if (warmupSteps < 0 || checkpointEvery < 0 || advStartStep < 0 || advRampSteps < 0) {
    throw ValidationError("step counts must be non-negative");
  }
  if (cropFrames < 1) {
    throw ValidationError("crop_frames must be >= 1");
  }
  if (stftWeight < 0.0 || advWeight < 0.0 || fmWeight < 0.0) {
    throw ValidationError("loss weights must be non-negative");
  }
}

// ---------------------------------------------------------------- corpora

PairedManifest readPairedManifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open paired manifest " + path.string());
  }
  const fs::path base = path.parent_path();
  PairedManifest m;
  std::string line;
  int lineNo = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      PairedEntry e;
      e.uttId = j.at("utt_id").get<std::string>();
      e.cleanPath = resolvePath(base, j.at("clean_path").get<std::string>());
      e.degradedPath = resolvePath(base, j.at("degraded_path").get<std::string>());
      e.transcript = j.value("transcript", "");
      e.speakerId = j.value("speaker_id", "");
      if (j.contains("recipe") && !j.at("recipe").is_null()) e.recipe = j.at("recipe");
      if (!seen.insert(e.uttId).second) {
        throw ValidationError("duplicate utt_id " + e.uttId);
      }
      m.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw FormatError(path.string() + ":" + std::to_string(lineNo) + ": " + ex.what());
    }
  }
  return m;
}

void writePairedManifest(const PairedManifest& manifest, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write paired manifest " + path.string());
  }
  for (const auto& e : manifest.entries) {
    json j = {
        {"utt_id", e.uttId},
        {"clean_path", e.cleanPath},
        {"degraded_path", e.degradedPath},
        {"transcript", e.transcript},
        {"speaker_id", e.speakerId},
        {"recipe", e.recipe ? *e.recipe : json(nullptr)},
    };
    out << j.dump() << "\n";
  }
}

DegradedCorpus degradeCorpus(
    const Manifest& clean,
    const Manifest& noise,
    DegradationPattern pattern,
    uint64_t seed,
    const std::string& codecBackend,
    const fs::path& outDir,
    int workers) {
  validateManifest(clean);
  validateManifest(noise);
  if (clean.entries.empty()) {
    throw ValidationError("clean manifest is empty");
  }
  if (noise.entries.empty()) {
    throw ValidationError("noise manifest is empty");
  }
  const auto backend = makeCodecBackend(codecBackend);
  NoiseBank bank(noise);
  const auto noiseIds = bank.ids();
  for (const auto& id : noiseIds) bank.get(id);  // load before going parallel

  const size_t n = clean.entries.size();
  const fs::path outAbs = fs::absolute(outDir).lexically_normal();
  DegradedCorpus corpus;
  corpus.recipes.resize(n);
  corpus.paired.entries.resize(n);
  fs::create_directories(outDir / "degraded");
  parallelFor(n, workers, [&](size_t i) {
    const ManifestEntry& e = clean.entries[i];
    DegradationRecipe recipe = sampleRecipe(deriveSeed(seed, i), pattern, noiseIds);
    recipe.uttId = e.uttId;
    recipe.codecBackend = codecBackend;
    AudioClip cleanClip = loadWav(e.audioPath);
    cleanClip.uttId = e.uttId;
    AudioClip degraded = degrade(cleanClip, bank, recipe, *backend);
    degraded.uttId = e.uttId;
    const std::string rel = "degraded/" + e.uttId + ".wav";
    saveWav(degraded, outDir / rel);
    PairedEntry p;
    p.uttId = e.uttId;
    p.cleanPath = fs::absolute(e.audioPath).lexically_normal().lexically_relative(outAbs).string();
    p.degradedPath = rel;
    p.transcript = e.transcript;
    p.speakerId = e.speakerId;
    p.recipe = json::parse(recipeToJson(recipe));
    corpus.paired.entries[i] = std::move(p);
    corpus.recipes[i] = std::move(recipe);
  });
  writePairedManifest(corpus.paired, outDir / "paired.jsonl");
  Manifest degradedManifest;
  for (const auto& p : corpus.paired.entries) {
    degradedManifest.entries.push_back({p.uttId, p.degradedPath, p.transcript, p.speakerId});
  }
  writeManifest(degradedManifest, outDir / "degraded.jsonl");
  writeRecipes(corpus.recipes, outDir / "recipes.jsonl");
  return corpus;
}

FeatureExample makeFeatureExample(
    const AudioClip& clean,
    const AudioClip& degraded,
    const std::string& transcript,
    const FeatureExtractor& extractor) {
  FeatureExample ex;
  ex.uttId = clean.uttId;
  ex.clean = extractor.speech(clean);
  ex.degraded = extractor.speech(degraded);
  const Eigen::Index k = std::min(ex.clean.frames(), ex.degraded.frames());
  ex.clean.values.conservativeResize(k, Eigen::NoChange);
  ex.degraded.values.conservativeResize(k, Eigen::NoChange);
  ex.text = extractor.text(transcript, clean.uttId);
  ex.cleanSpeaker = extractor.speaker(clean);
  ex.degradedSpeaker = extractor.speaker(degraded);
  ex.cleanAudio = toRate24k(clean);
  return ex;
}

std::vector<FeatureExample> loadFeatureExamples(
    const PairedManifest& manifest, const FeatureExtractor& extractor) {
  if (manifest.entries.empty()) {
    throw ValidationError("paired manifest is empty");
  }
  std::vector<FeatureExample> out;
  for (const auto& e : manifest.entries) {
    if (e.transcript.empty()) {
      throw ValidationError("utterance " + e.uttId + " has no transcript");
    }
    AudioClip clean = loadWav(e.cleanPath);
    clean.uttId = e.uttId;
    AudioClip degraded = loadWav(e.degradedPath);
    degraded.uttId = e.uttId;
    out.push_back(makeFeatureExample(clean, degraded, e.transcript, extractor));
  }
  return out;
}

// ---------------------------------------------------------------- logging

LossLog::LossLog(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path);
  if (!out_) {
    throw IoError("cannot write loss log " + path.string());
  }
}

void LossLog::record(int step, const std::string& component, double value) {
  if (!out_.is_open()) return;
  json j = {{"step", step}, {"component", component}};
  if (std::isfinite(value)) {
    j["value"] = value;
  } else {
    j["value"] = nullptr;
  }
  out_ << j.dump() << "\n";
}

void LossLog::note(const std::string& key, const std::string& value) {
  if (!out_.is_open()) return;
  out_ << json{{"event", key}, {"value", value}}.dump() << "\n";
  out_.flush();
}

// ---------------------------------------------------------------- cleaner

namespace {

std::vector<size_t> usableExamples(std::span<const FeatureExample> examples, int cropFrames) {
  if (examples.empty()) {
    throw ValidationError("no training examples");
  }
  std::vector<size_t> idx;
  for (size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].clean.frames() >= cropFrames) idx.push_back(i);
  }
  if (idx.empty()) {
    throw ValidationError(
        "no utterance has at least " + std::to_string(cropFrames) + " feature frames");
  }
  return idx;
}

[[noreturn]] void abortNonFinite(
    LossLog* log, int step, const std::vector<std::string>& batchIds,
    const std::vector<std::pair<std::string, double>>& components) {
  std::ostringstream msg;
  msg << "non-finite loss at step " << step << " (batch:";
  for (const auto& id : batchIds) msg << " " << id;
  msg << ";";
  for (const auto& [name, v] : components) msg << " " << name << "=" << v;
  msg << ")";
  if (log != nullptr) log->note("abort", msg.str());
  throw TrainingError(msg.str());
}

} // namespace

double cleanerEvalLoss(
    const CleanerModel& model, std::span<const FeatureExample> examples, int cropFrames) {
  double total = 0.0;
  int count = 0;
  for (const auto& ex : examples) {
    const Var text = ag::constant(ex.text.values);
    const Var spk = ag::constant(speakerRow(ex.degradedSpeaker));
    for (Eigen::Index off = 0; off + cropFrames <= ex.clean.frames(); off += cropFrames) {
      const RowMatrix x = ex.degraded.values.middleRows(off, cropFrames);
      const RowMatrix s = ex.clean.values.middleRows(off, cropFrames);
      const auto out = model.forward(ag::constant(x), text, spk);
      std::vector<CleanerPrediction> preds;
      for (size_t i = 0; i < out.prePostnet.size(); ++i) {
        preds.push_back({out.prePostnet[i].value(), out.postPostnet[i].value()});
      }
      total += cleanerLoss(s, preds).total;
      ++count;
    }
  }
  if (count == 0) {
    throw ValidationError("no utterance is long enough for one crop");
  }
  return total / count;
}

TrainResult trainCleaner(
    CleanerModel& model,
    const TrainConfig& config,
    std::span<const FeatureExample> examples,
    LossLog* log,
    const CheckpointHook& hook) {
  config.validate();
  const auto usable = usableExamples(examples, config.cropFrames);
  nn::AdamConfig ac;
  ac.lr = config.lr;
  ac.warmupSteps = config.warmupSteps;
  ac.clipNorm = config.clipNorm;
  nn::Adam opt(model.params(), ac);
  Rng rng(deriveSeed(config.seed, 0xC7));

  TrainResult result;
  result.inputSource = "degraded_features";
  if (log != nullptr) log->note("input_source", result.inputSource);
  result.initialLoss = cleanerEvalLoss(model, examples, config.cropFrames);
  const double inv = 1.0 / config.batchSize;

  for (int step = 1; step <= config.steps; ++step) {
    Var total;
    CleanerLossReport sum;
    std::vector<std::string> ids;
    for (int b = 0; b < config.batchSize; ++b) {
      const FeatureExample& ex = examples[usable[rng.uniformInt(0, usable.size() - 1)]];
      ids.push_back(ex.uttId);
      const FrameCrop crop = cropTrainingFrames(ex.clean, ex.degraded, rng.next(), config.cropFrames);
      const auto out = model.forward(
          ag::constant(crop.degraded.values), ag::constant(ex.text.values),
          ag::constant(speakerRow(ex.degradedSpeaker)));
      CleanerLossReport rep;
      const Var loss = ag::scale(cleanerLoss(ag::constant(crop.clean.values), out, &rep), inv);
      sum.l1 += rep.l1 * inv;
      sum.l2sq += rep.l2sq * inv;
      sum.sc += rep.sc * inv;
      sum.total += rep.total * inv;
      total = total.defined() ? ag::add(total, loss) : loss;
    }
    if (!allFinite({sum.total, sum.l1, sum.l2sq, sum.sc})) {
      abortNonFinite(
          log, step, ids, {{"l1", sum.l1}, {"l2sq", sum.l2sq}, {"sc", sum.sc}, {"total", sum.total}});
    }
    total.backward();
    const double gradNorm = opt.step();
    result.stepLoss.push_back(sum.total);
    if (log != nullptr) {
      log->record(step, "l1", sum.l1);
      log->record(step, "l2sq", sum.l2sq);
      log->record(step, "sc", sum.sc);
      log->record(step, "total", sum.total);
      log->record(step, "grad_norm", gradNorm);
    }
    if (hook && config.checkpointEvery > 0 && step % config.checkpointEvery == 0) hook(step);
  }
  result.finalLoss = cleanerEvalLoss(model, examples, config.cropFrames);
  if (log != nullptr) {
    log->record(0, "eval_initial", result.initialLoss);
    log->record(config.steps, "eval_final", result.finalLoss);
  }
  return result;
}

// ---------------------------------------------------------------- vocoder

std::string vocoderStageName(VocoderStage stage) {
  return stage == VocoderStage::kPretrainClean ? "pretrain_clean" : "finetune_predicted";
}

VocoderStage parseVocoderStage(const std::string& name) {
  if (name == "pretrain_clean" || name == "pretrain") return VocoderStage::kPretrainClean;
  if (name == "finetune_predicted" || name == "finetune") return VocoderStage::kFinetunePredicted;
  throw ValidationError("unknown vocoder stage '" + name + "'");
}

std::vector<VocoderInput> vocoderInputs(
    VocoderStage stage, std::span<const FeatureExample> examples, const CleanerModel* cleaner) {
  std::vector<VocoderInput> out;
  if (stage == VocoderStage::kFinetunePredicted && cleaner == nullptr) {
    throw ValidationError("finetune_predicted stage needs a cleaner checkpoint");
  }
  for (const auto& ex : examples) {
    if (stage == VocoderStage::kPretrainClean) {
      out.push_back({ex.clean, ex.cleanSpeaker});
    } else {
      out.push_back({cleaner->clean(ex.degraded, ex.text, ex.degradedSpeaker), ex.degradedSpeaker});
    }
  }
  return out;
}

namespace {

int samplesPerFeatureFrame(const VocoderConfig& c) {
  return static_cast<int>(std::lround(c.sampleRate / c.featureRateIn));
}

/// Feature frames that have matching audio.
Eigen::Index alignedFrames(const FeatureExample& ex, const VocoderInput& in, int spf) {
  return std::min<Eigen::Index>(
      in.features.frames(), static_cast<Eigen::Index>(ex.cleanAudio.size()) / spf);
}

struct VocoderCrop {
  RowMatrix features;
  nn::Mat target;
  bool valid = false;
};

VocoderCrop makeVocoderCrop(
    const FeatureExample& ex, const VocoderInput& in, Eigen::Index offset, int frames,
    double lambda, int spf) {
  VocoderCrop c;
  c.features = in.features.values.middleRows(offset, frames);
  c.target.resize(static_cast<Eigen::Index>(frames) * spf, 1);
  for (Eigen::Index i = 0; i < c.target.rows(); ++i) {
    c.target(i, 0) = ex.cleanAudio[offset * spf + i];
  }
  const double peak = c.target.cwiseAbs().maxCoeff();
  if (peak > 0.0) {
    c.target *= lambda / peak;
    c.valid = true;
  }
  return c;
}

} // namespace

double vocoderEvalLoss(
    const VocoderModel& model,
    std::span<const FeatureExample> examples,
    std::span<const VocoderInput> inputs,
    int cropFrames,
    uint64_t seed) {
  const VocoderConfig& vc = model.config();
  const int spf = samplesPerFeatureFrame(vc);
  double total = 0.0;
  int count = 0;
  for (size_t i = 0; i < examples.size(); ++i) {
    const Eigen::Index k = alignedFrames(examples[i], inputs[i], spf);
    for (Eigen::Index off = 0; off + cropFrames <= k; off += cropFrames) {
      const auto crop = makeVocoderCrop(examples[i], inputs[i], off, cropFrames, vc.lambdaGain, spf);
      if (!crop.valid) continue;
      const Var y = model.synthesize(
          ag::constant(crop.features), ag::constant(speakerRow(inputs[i].speaker)),
          deriveSeed(seed, count));
      StftLossReport rep;
      multiResolutionStftLoss(y, ag::constant(crop.target), vc.stftResolutions, &rep);
      total += rep.total;
      ++count;
    }
  }
  if (count == 0) {
    throw ValidationError("no utterance is long enough for one vocoder crop");
  }
  return total / count;
}

TrainResult trainVocoder(
    VocoderModel& model,
    const TrainConfig& config,
    VocoderStage stage,
    std::span<const FeatureExample> examples,
    const CleanerModel* cleaner,
    LossLog* log,
    const CheckpointHook& hook) {
  config.validate();
  if (examples.empty()) {
    throw ValidationError("no training examples");
  }
  const VocoderConfig& vc = model.config();
  const auto inputs = vocoderInputs(stage, examples, cleaner);
  for (const auto& in : inputs) {
    if (in.features.dim() != vc.featureDim || in.speaker.values.size() != vc.speakerDim) {
      throw ValidationError("vocoder training inputs do not match the vocoder dims");
    }
  }
  const int spf = samplesPerFeatureFrame(vc);
  std::vector<size_t> usable;
  for (size_t i = 0; i < examples.size(); ++i) {
    if (alignedFrames(examples[i], inputs[i], spf) >= config.cropFrames) usable.push_back(i);
  }
  if (usable.empty()) {
    throw ValidationError("no utterance is long enough for one vocoder crop");
  }

  nn::AdamConfig gc;
  gc.lr = config.lr;
  gc.warmupSteps = config.warmupSteps;
  gc.clipNorm = config.clipNorm;
  nn::Adam genOpt(model.generatorParams(), gc);
  nn::AdamConfig dc = gc;
  dc.lr = config.discLr;
  dc.beta1 = 0.5;
  nn::Adam discOpt(model.discriminatorParams(), dc);
  Rng rng(deriveSeed(config.seed, 0x70));
  const uint64_t evalSeed = deriveSeed(config.seed, 0xE7);

  TrainResult result;
  result.inputSource =
      stage == VocoderStage::kPretrainClean ? "clean_features" : "cleaner_predicted_features";
  if (log != nullptr) {
    log->note("stage", vocoderStageName(stage));
    log->note("input_source", result.inputSource);
  }
  result.initialLoss = vocoderEvalLoss(model, examples, inputs, config.cropFrames, evalSeed);
  const double inv = 1.0 / config.batchSize;

  for (int step = 1; step <= config.steps; ++step) {
    double advScale = 0.0;
    if (step > config.advStartStep && (config.advWeight > 0.0 || config.fmWeight > 0.0)) {
      advScale = config.advRampSteps == 0
          ? 1.0
          : std::min(1.0, static_cast<double>(step - config.advStartStep) / config.advRampSteps);
    }
    Var genTotal;
    double stft = 0.0, sc = 0.0, mag = 0.0, adv = 0.0, fm = 0.0, disc = 0.0;
    std::vector<std::string> ids;
    for (int b = 0; b < config.batchSize; ++b) {
      const size_t i = usable[rng.uniformInt(0, usable.size() - 1)];
      ids.push_back(examples[i].uttId);
      const Eigen::Index k = alignedFrames(examples[i], inputs[i], spf);
      const auto off = static_cast<Eigen::Index>(rng.uniformInt(0, k - config.cropFrames));
      const auto crop = makeVocoderCrop(
          examples[i], inputs[i], off, config.cropFrames, vc.lambdaGain, spf);
      if (!crop.valid) continue;
      const Var target = ag::constant(crop.target);
      const Var y = model.synthesize(
          ag::constant(crop.features), ag::constant(speakerRow(inputs[i].speaker)), rng.next());
      StftLossReport rep;
      Var loss = ag::scale(
          multiResolutionStftLoss(y, target, vc.stftResolutions, &rep), config.stftWeight);
      stft += rep.total * inv;
      sc += rep.spectralConvergence * inv;
      mag += rep.logMagnitude * inv;
      if (advScale > 0.0) {
        // Discriminator update on a detached copy of the generator output.
        const auto realOut = model.discriminator()(target);
        const auto fakeDetached = model.discriminator()(ag::constant(y.value()));
        const Var dLoss = ag::scale(discriminatorLoss(realOut, fakeDetached), inv);
        disc += dLoss.scalar();
        dLoss.backward();

        const auto fakeOut = model.discriminator()(y);
        const Var advLoss = generatorAdversarialLoss(fakeOut);
        const Var fmLoss = featureMatchingLoss(realOut, fakeOut);
        adv += advLoss.scalar() * inv;
        fm += fmLoss.scalar() * inv;
        loss = ag::add(
            loss, ag::scale(
                      ag::add(ag::scale(advLoss, config.advWeight), ag::scale(fmLoss, config.fmWeight)),
                      advScale));
      }
      loss = ag::scale(loss, inv);
      genTotal = genTotal.defined() ? ag::add(genTotal, loss) : loss;
    }
    if (!genTotal.defined()) continue;
    const double total = genTotal.scalar();
    if (!allFinite({total, stft, adv, fm, disc})) {
      abortNonFinite(
          log, step, ids,
          {{"stft", stft}, {"adv", adv}, {"fm", fm}, {"disc", disc}, {"total", total}});
    }
    if (advScale > 0.0) {
      discOpt.step();
    }
    genTotal.backward();
    // The generator pass also reaches the discriminator weights; drop that.
    model.discriminatorParams().zeroGrad();
    const double gradNorm = genOpt.step();
    result.stepLoss.push_back(stft);
    if (log != nullptr) {
      log->record(step, "stft", stft);
      log->record(step, "stft_sc", sc);
      log->record(step, "stft_mag", mag);
      if (advScale > 0.0) {
        log->record(step, "adv", adv);
        log->record(step, "fm", fm);
        log->record(step, "disc", disc);
      }
      log->record(step, "total", total);
      log->record(step, "grad_norm", gradNorm);
    }
    if (hook && config.checkpointEvery > 0 && step % config.checkpointEvery == 0) hook(step);
  }
  result.finalLoss = vocoderEvalLoss(model, examples, inputs, config.cropFrames, evalSeed);
  if (log != nullptr) {
    log->record(0, "eval_initial", result.initialLoss);
    log->record(config.steps, "eval_final", result.finalLoss);
  }
  return result;
}

// ------------------------------------------------------------ checkpoints

void saveCleaner(const CleanerModel& model, const ExtractorSpec& extractor, const fs::path& path) {
  Checkpoint ckpt;
  ckpt.meta = {
      {"kind", "cleaner"}, {"config", toJson(model.config())}, {"extractor", toJson(extractor)}};
  addParams(ckpt, model.params());
  writeCheckpoint(ckpt, path);
}

void saveVocoder(const VocoderModel& model, const ExtractorSpec& extractor, const fs::path& path) {
  Checkpoint ckpt;
  ckpt.meta = {
      {"kind", "vocoder"}, {"config", toJson(model.config())}, {"extractor", toJson(extractor)}};
  addParams(ckpt, model.generatorParams(), "gen.");
  addParams(ckpt, model.discriminatorParams(), "disc.");
  writeCheckpoint(ckpt, path);
}

namespace {

void expectKind(const Checkpoint& ckpt, const std::string& kind, const fs::path& path) {
  const std::string got = ckpt.meta.value("kind", "");
  if (got != kind) {
    throw ValidationError(
        path.string() + " holds a '" + got + "' checkpoint, expected '" + kind + "'");
  }
}

} // namespace

LoadedCleaner loadCleaner(const fs::path& path) {
  const Checkpoint ckpt = readCheckpoint(path);
  expectKind(ckpt, "cleaner", path);
  LoadedCleaner out{
      CleanerModel(cleanerConfigFromJson(ckpt.meta.at("config"))),
      extractorSpecFromJson(ckpt.meta.at("extractor"))};
  loadParams(ckpt, out.model.params());
  return out;
}

LoadedVocoder loadVocoder(const fs::path& path) {
  const Checkpoint ckpt = readCheckpoint(path);
  expectKind(ckpt, "vocoder", path);
  LoadedVocoder out{
      VocoderModel(vocoderConfigFromJson(ckpt.meta.at("config"))),
      extractorSpecFromJson(ckpt.meta.at("extractor"))};
  loadParams(ckpt, out.model.generatorParams(), "gen.");
  loadParams(ckpt, out.model.discriminatorParams(), "disc.");
  return out;
}

// ---------------------------------------------------------------- restore

void checkCompatible(
    const CleanerConfig& cleaner, const VocoderConfig& vocoder, const ExtractorSpec& extractor) {
  auto check = [](int a, int b, const std::string& what) {
    if (a != b) {
      throw ValidationError(
          "dimension mismatch: " + what + " (" + std::to_string(a) + " vs " + std::to_string(b) +
          ")");
    }
  };
  check(cleaner.speechDim, extractor.speechDim, "cleaner D vs extractor speech dim");
  check(cleaner.textDim, extractor.textDim, "cleaner W vs extractor text dim");
  check(cleaner.speakerDim, extractor.speakerDim, "cleaner Q vs extractor speaker dim");
  check(vocoder.featureDim, cleaner.speechDim, "vocoder D vs cleaner D");
  check(vocoder.speakerDim, cleaner.speakerDim, "vocoder Q vs cleaner Q");
}

AudioClip restore(
    const AudioClip& clip,
    const std::string& transcript,
    const CleanerModel& cleaner,
    const VocoderModel& vocoder,
    const FeatureExtractor& extractor,
    uint64_t seed) {
  checkCompatible(cleaner.config(), vocoder.config(), extractor.spec());
  const SpeechFeatures x = extractor.speech(clip);
  const TextCondition e = extractor.text(transcript, clip.uttId);
  const SpeakerEmbedding d = extractor.speaker(clip);
  const SpeechFeatures s = cleaner.clean(x, e, d);
  AudioClip y = synthesize(vocoder, s, d, seed);
  y.uttId = clip.uttId;
  y.speakerId = clip.speakerId;
  y.transcript = transcript;
  return y;
}

// ------------------------------------------------------------- evaluation

double wordErrorRate(const std::string& reference, const std::string& hypothesis) {
  auto words = [](const std::string& s) {
    std::vector<std::string> w;
    std::istringstream in(s);
    for (std::string t; in >> t;) w.push_back(t);
    return w;
  };
  const auto ref = words(reference);
  const auto hyp = words(hypothesis);
  if (ref.empty()) {
    throw ValidationError("WER needs a non-empty reference");
  }
  std::vector<size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= hyp.size(); ++j) {
      const size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[hyp.size()]) / static_cast<double>(ref.size());
}

UtteranceScore scoreUtterance(
    const AudioClip& candidate, const AudioClip& clean, const FeatureExtractor& extractor) {
  std::vector<double> c = toRate24k(candidate);
  std::vector<double> r = toRate24k(clean);
  const size_t n = std::min(c.size(), r.size());
  c.resize(n);
  r.resize(n);
  auto normalize = [](std::vector<double>& x, const std::string& what) {
    const double level = rms(x);
    if (!(level > 0.0)) {
      throw ValidationError("cannot score a silent " + what + " clip");
    }
    for (auto& v : x) v *= kEvalRms / level;
  };
  normalize(c, "candidate");
  normalize(r, "reference");

  UtteranceScore s;
  s.uttId = clean.uttId;
  AudioClip cc{c, kRate24k, clean.uttId, {}, {}};
  AudioClip rc{r, kRate24k, clean.uttId, {}, {}};
  s.spkSimilarity = cosineSimilarity(extractor.speaker(cc), extractor.speaker(rc));

  const MelConfig mel;
  const RowMatrix lc = logMel(cc, mel);
  const RowMatrix lr = logMel(rc, mel);
  s.logmelL2 = (lc - lr).rowwise().norm().mean();

  double sig = 0.0, err = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sig += r[i] * r[i];
    err += (r[i] - c[i]) * (r[i] - c[i]);
  }
  s.snrProxy = err > 0.0 ? std::min(kMaxSnrProxyDb, 10.0 * std::log10(sig / err)) : kMaxSnrProxyDb;
  return s;
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary m;
  m.n = values.size();
  if (m.n == 0) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    const double sd = std::sqrt(ss / static_cast<double>(m.n - 1));
    m.ci95 = kCi95 * sd / std::sqrt(static_cast<double>(m.n));
  }
  return m;
}

namespace {

EvalSystem summarizeSystem(std::vector<UtteranceScore> rows) {
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.uttId < b.uttId; });
  EvalSystem sys;
  std::vector<double> spk, lm, snr, wer;
  for (const auto& r : rows) {
    spk.push_back(r.spkSimilarity);
    lm.push_back(r.logmelL2);
    snr.push_back(r.snrProxy);
    if (r.wer) wer.push_back(*r.wer);
  }
  sys.spk = summarize(spk);
  sys.logmelL2 = summarize(lm);
  sys.snrProxy = summarize(snr);
  if (!wer.empty()) sys.wer = summarize(wer);
  sys.perUtt = std::move(rows);
  return sys;
}

json summaryJson(const MetricSummary& m) {
  return {{"mean", m.mean}, {"ci95", m.ci95}, {"n", m.n}};
}

json systemJson(const EvalSystem& sys) {
  json rows = json::array();
  for (const auto& r : sys.perUtt) {
    json j = {
        {"utt_id", r.uttId},
        {"spk_similarity", r.spkSimilarity},
        {"logmel_l2", r.logmelL2},
        {"snr_proxy", r.snrProxy}};
    if (r.wer) j["wer"] = *r.wer;
    rows.push_back(j);
  }
  json agg = {
      {"spk_similarity", summaryJson(sys.spk)},
      {"logmel_l2", summaryJson(sys.logmelL2)},
      {"snr_proxy", summaryJson(sys.snrProxy)}};
  if (sys.wer) agg["wer"] = summaryJson(*sys.wer);
  return {{"per_utt", rows}, {"aggregates", agg}};
}

} // namespace

EvalReport evaluate(
    const Manifest& restored,
    const Manifest& clean,
    const Manifest& degraded,
    const FeatureExtractor& extractor,
    const AsrHook& asr,
    int workers) {
  validateManifest(restored);
  validateManifest(clean);
  validateManifest(degraded);
  if (clean.entries.empty()) {
    throw ValidationError("evaluation manifests are empty");
  }
  if (restored.entries.size() != clean.entries.size() ||
      degraded.entries.size() != clean.entries.size()) {
    throw ValidationError("misaligned manifests: row counts differ");
  }
  std::map<std::string, const ManifestEntry*> byId[2];
  for (const auto& e : restored.entries) byId[0][e.uttId] = &e;
  for (const auto& e : degraded.entries) byId[1][e.uttId] = &e;
  for (const auto& e : clean.entries) {
    if (!byId[0].count(e.uttId) || !byId[1].count(e.uttId)) {
      throw ValidationError("misaligned manifests: " + e.uttId + " is missing");
    }
  }

  const size_t n = clean.entries.size();
  std::vector<UtteranceScore> rest(n), deg(n);
  parallelFor(n, workers, [&](size_t i) {
    const ManifestEntry& ce = clean.entries[i];
    AudioClip cleanClip = loadWav(ce.audioPath);
    cleanClip.uttId = ce.uttId;
    const ManifestEntry* sides[2] = {byId[0].at(ce.uttId), byId[1].at(ce.uttId)};
    UtteranceScore* slots[2] = {&rest[i], &deg[i]};
    for (int k = 0; k < 2; ++k) {
      AudioClip cand = loadWav(sides[k]->audioPath);
      cand.uttId = ce.uttId;
      *slots[k] = scoreUtterance(cand, cleanClip, extractor);
      if (asr) {
        slots[k]->wer = wordErrorRate(ce.transcript, asr(sides[k]->audioPath, ce.transcript));
      }
    }
  });
  return EvalReport{summarizeSystem(std::move(rest)), summarizeSystem(std::move(deg))};
}

json evalReportToJson(const EvalReport& report) {
  return {{"restored", systemJson(report.restored)}, {"degraded", systemJson(report.degraded)}};
}

std::string evalReportTable(const EvalReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  auto cell = [&](const MetricSummary& m) {
    std::ostringstream c;
    c << std::fixed << std::setprecision(3) << m.mean << " +/- " << m.ci95;
    return c.str();
  };
  out << std::left << std::setw(10) << "system" << std::setw(22) << "SPK" << std::setw(22)
      << "logmel_l2" << std::setw(22) << "snr_proxy" << "WER\n";
  const std::pair<const char*, const EvalSystem*> rows[] = {
      {"degraded", &report.degraded}, {"restored", &report.restored}};
  for (const auto& [name, sys] : rows) {
    out << std::setw(10) << name << std::setw(22) << cell(sys->spk) << std::setw(22)
        << cell(sys->logmelL2) << std::setw(22) << cell(sys->snrProxy)
        << (sys->wer ? cell(*sys->wer) : std::string("-")) << "\n";
  }
  return out.str();
}

} // namespace revoice
