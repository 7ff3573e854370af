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

// Training loops, restoration and the objective evaluation harness.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "revoice/checkpoint.h"
#include "revoice/cleaner.h"
#include "revoice/degrade.h"
#include "revoice/features.h"
#include "revoice/vocoder.h"

namespace revoice {

struct TrainConfig {
  int steps = 500;
  int batchSize = 4;
  double lr = 1e-3;
  int warmupSteps = 20;
  double clipNorm = 10.0;
  uint64_t seed = 0;
  int checkpointEvery = 0;  // 0 = only at the end
  int cropFrames = kDefaultCropFrames;

  // Vocoder only.
  double stftWeight = 1.0;
  double advWeight = 0.5;
  double fmWeight = 1.0;
  int advStartStep = 0;   // STFT-only before this step
  int advRampSteps = 100; // linear ramp of the adversarial weights
  double discLr = 2e-4;

  static TrainConfig cleanerDefaults();
  static TrainConfig vocoderDefaults();
  void validate() const;
};

// ---------------------------------------------------------------- corpora

/// One line of a paired (clean, degraded) manifest.
struct PairedEntry {
  std::string uttId;
  std::string cleanPath;
  std::string degradedPath;
  std::string transcript;
  std::string speakerId;
  std::optional<nlohmann::json> recipe;
};

struct PairedManifest {
  std::vector<PairedEntry> entries;
};

/// Keys: utt_id, clean_path, degraded_path, transcript, speaker_id, recipe.
PairedManifest readPairedManifest(const std::filesystem::path& path);
void writePairedManifest(const PairedManifest& manifest, const std::filesystem::path& path);

struct DegradedCorpus {
  PairedManifest paired;
  std::vector<DegradationRecipe> recipes;
};

/// Samples one recipe per clean utterance (seed derived from `seed` and the
/// row index), degrades it and writes degraded/<utt_id>.wav, paired.jsonl,
/// degraded.jsonl and recipes.jsonl under `outDir`. Paths in the returned
/// manifest are relative to `outDir`.
DegradedCorpus degradeCorpus(
    const Manifest& clean,
    const Manifest& noise,
    DegradationPattern pattern,
    uint64_t seed,
    const std::string& codecBackend,
    const std::filesystem::path& outDir,
    int workers = 1);

/// Everything a training step needs for one utterance.
struct FeatureExample {
  std::string uttId;
  SpeechFeatures clean;
  SpeechFeatures degraded;
  TextCondition text;
  SpeakerEmbedding cleanSpeaker;
  SpeakerEmbedding degradedSpeaker;
  std::vector<double> cleanAudio;  // 24 kHz
};

FeatureExample makeFeatureExample(
    const AudioClip& clean,
    const AudioClip& degraded,
    const std::string& transcript,
    const FeatureExtractor& extractor);

std::vector<FeatureExample> loadFeatureExamples(
    const PairedManifest& manifest, const FeatureExtractor& extractor);

// ---------------------------------------------------------------- logging

/// Line-delimited {"step", "component", "value"} records.
class LossLog {
 public:
  LossLog() = default;
  explicit LossLog(const std::filesystem::path& path);

  void record(int step, const std::string& component, double value);
  void note(const std::string& key, const std::string& value);
  bool enabled() const {
    return out_.is_open();
  }

 private:
  std::ofstream out_;
};

struct TrainResult {
  double initialLoss = 0.0;  // evaluation loss before the first step
  double finalLoss = 0.0;    // evaluation loss after the last step
  std::vector<double> stepLoss;
  std::string inputSource;
};

using CheckpointHook = std::function<void(int step)>;

// ---------------------------------------------------------------- cleaner

/// Loss over fixed non-overlapping crops of every example (the quantity
/// reported as initial/final training loss).
double cleanerEvalLoss(
    const CleanerModel& model, std::span<const FeatureExample> examples, int cropFrames);

TrainResult trainCleaner(
    CleanerModel& model,
    const TrainConfig& config,
    std::span<const FeatureExample> examples,
    LossLog* log = nullptr,
    const CheckpointHook& hook = {});

// ---------------------------------------------------------------- vocoder

enum class VocoderStage { kPretrainClean, kFinetunePredicted };

std::string vocoderStageName(VocoderStage stage);
VocoderStage parseVocoderStage(const std::string& name);

/// Inputs the vocoder sees for one utterance in a given stage: clean
/// features with the clean-clip speaker embedding, or cleaner predictions
/// with the degraded-clip embedding.
struct VocoderInput {
  SpeechFeatures features;
  SpeakerEmbedding speaker;
};

std::vector<VocoderInput> vocoderInputs(
    VocoderStage stage,
    std::span<const FeatureExample> examples,
    const CleanerModel* cleaner);

double vocoderEvalLoss(
    const VocoderModel& model,
    std::span<const FeatureExample> examples,
    std::span<const VocoderInput> inputs,
    int cropFrames,
    uint64_t seed);

TrainResult trainVocoder(
    VocoderModel& model,
    const TrainConfig& config,
    VocoderStage stage,
    std::span<const FeatureExample> examples,
    const CleanerModel* cleaner,
    LossLog* log = nullptr,
    const CheckpointHook& hook = {});

// ------------------------------------------------------------ checkpoints

void saveCleaner(
    const CleanerModel& model, const ExtractorSpec& extractor, const std::filesystem::path& path);
void saveVocoder(
    const VocoderModel& model, const ExtractorSpec& extractor, const std::filesystem::path& path);

struct LoadedCleaner {
  CleanerModel model;
  ExtractorSpec extractor;
};
struct LoadedVocoder {
  VocoderModel model;
  ExtractorSpec extractor;
};

LoadedCleaner loadCleaner(const std::filesystem::path& path);
LoadedVocoder loadVocoder(const std::filesystem::path& path);

// ---------------------------------------------------------------- restore

/// Throws ValidationError when the cleaner, vocoder and extractor dims differ.
void checkCompatible(
    const CleanerConfig& cleaner, const VocoderConfig& vocoder, const ExtractorSpec& extractor);

AudioClip restore(
    const AudioClip& clip,
    const std::string& transcript,
    const CleanerModel& cleaner,
    const VocoderModel& vocoder,
    const FeatureExtractor& extractor,
    uint64_t seed = 0);

// ------------------------------------------------------------- evaluation

/// (audio path, reference transcript) -> hypothesis transcript.
using AsrHook =
    std::function<std::string(const std::filesystem::path&, const std::string& reference)>;

/// Word-level Levenshtein distance over whitespace tokens / reference words.
double wordErrorRate(const std::string& reference, const std::string& hypothesis);

struct UtteranceScore {
  std::string uttId;
  double spkSimilarity = 0.0;
  double logmelL2 = 0.0;
  double snrProxy = 0.0;
  std::optional<double> wer;
};

struct MetricSummary {
  double mean = 0.0;
  double ci95 = 0.0;  // half-width, 1.96 sd / sqrt(n)
  size_t n = 0;
};

struct EvalSystem {
  std::vector<UtteranceScore> perUtt;  // sorted by utt id
  MetricSummary spk;
  MetricSummary logmelL2;
  MetricSummary snrProxy;
  std::optional<MetricSummary> wer;
};

struct EvalReport {
  EvalSystem restored;
  EvalSystem degraded;  // degraded-as-restored baseline row
};

/// Per-utterance metrics of `candidate` against `clean`. Both signals are
/// brought to 24 kHz, trimmed to the shorter length and RMS-normalized.
UtteranceScore scoreUtterance(
    const AudioClip& candidate, const AudioClip& clean, const FeatureExtractor& extractor);

MetricSummary summarize(std::span<const double> values);

EvalReport evaluate(
    const Manifest& restored,
    const Manifest& clean,
    const Manifest& degraded,
    const FeatureExtractor& extractor,
    const AsrHook& asr = {},
    int workers = 1);

nlohmann::json evalReportToJson(const EvalReport& report);
std::string evalReportTable(const EvalReport& report);

} // namespace revoice
