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
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.h"
#include "revoice/error.h"
#include "revoice/fixtures.h"
#include "revoice/rng.h"
#include "revoice/train_eval.h"

using namespace revoice;
namespace fs = std::filesystem;

namespace {

ExtractorSpec tinySpec() {
  ExtractorSpec s;
  s.speechDim = 8;
  s.textDim = 4;
  s.speakerDim = 4;
  return s;
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "revoice_train_eval_test";
    fs::remove_all(dir_);
    const auto paths = writeFixtureCorpus(makeFixtureCorpus(0), dir_ / "fx");
    clean_ = new Manifest(readManifest(paths.cleanManifest));
    const Manifest noise = readManifest(paths.noiseManifest);
    degradeCorpus(*clean_, noise, parsePattern("reverb+codec"), 3, "surrogate", dir_ / "deg");
    paired_ = new PairedManifest(readPairedManifest(dir_ / "deg" / "paired.jsonl"));
    extractor_ = makeExtractor(tinySpec()).release();
    examples_ = new std::vector<FeatureExample>(loadFeatureExamples(*paired_, *extractor_));
  }
  static void TearDownTestSuite() {
    delete examples_;
    delete extractor_;
    delete paired_;
    delete clean_;
    fs::remove_all(dir_);
  }

  static TrainConfig quick(int steps) {
    TrainConfig t = TrainConfig::cleanerDefaults();
    t.steps = steps;
    t.batchSize = 2;
    t.warmupSteps = 2;
    return t;
  }

  static inline fs::path dir_;
  static inline Manifest* clean_ = nullptr;
  static inline PairedManifest* paired_ = nullptr;
  static inline FeatureExtractor* extractor_ = nullptr;
  static inline std::vector<FeatureExample>* examples_ = nullptr;
};

} // namespace

TEST(PairedManifestTest, RoundTrip) {
  const fs::path path = fs::temp_directory_path() / "revoice_paired_rt.jsonl";
  PairedManifest m;
  m.entries.push_back({"a", "/x/a.wav", "/y/a.wav", "hello world", "s1", nlohmann::json{{"k", 1}}});
  m.entries.push_back({"b", "/x/b.wav", "/y/b.wav", "second", "s2", std::nullopt});
  writePairedManifest(m, path);
  const auto back = readPairedManifest(path);
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[0].uttId, "a");
  EXPECT_EQ(back.entries[0].transcript, "hello world");
  EXPECT_EQ(back.entries[0].cleanPath, "/x/a.wav");
  EXPECT_EQ(back.entries[0].recipe->at("k"), 1);
  EXPECT_FALSE(back.entries[1].recipe.has_value());
  fs::remove(path);
}

TEST(WerTest, MatchesLevenshteinOracle) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"the cat sat", "the cat sat"},
      {"the cat sat", "the bat sat down"},
      {"a b c d", "b c"},
      {"one", ""},
      {"x y z", "z y x"}};
  for (const auto& [ref, hyp] : cases) {
    EXPECT_NEAR(wordErrorRate(ref, hyp), oracle::wer(words(ref), words(hyp)), 1e-12) << ref << "|" << hyp;
  }
  EXPECT_DOUBLE_EQ(wordErrorRate("a b", "a b"), 0.0);
  EXPECT_THROW(wordErrorRate("", "a"), ValidationError);
}

TEST(SummarizeTest, NormalApproximationInterval) {
  const std::vector<double> v = {1, 2, 3, 4, 5};
  const auto s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 3.0);
  EXPECT_EQ(s.n, 5u);
  EXPECT_NEAR(s.ci95, 1.96 * std::sqrt(2.5) / std::sqrt(5.0), 1e-12);
  const std::vector<double> one = {7.0};
  EXPECT_DOUBLE_EQ(summarize(one).ci95, 0.0);
}

TEST_F(PipelineTest, DegradedCorpusLayout) {
  EXPECT_EQ(paired_->entries.size(), size_t(kFixtureUtterances));
  EXPECT_TRUE(fs::exists(dir_ / "deg" / "recipes.jsonl"));
  EXPECT_TRUE(fs::exists(dir_ / "deg" / "degraded.jsonl"));
  for (const auto& e : paired_->entries) {
    EXPECT_TRUE(fs::exists(e.degradedPath)) << e.degradedPath;
    EXPECT_TRUE(e.recipe.has_value());
  }
}

TEST_F(PipelineTest, EvaluateIdentityAndBaseline) {
  const Manifest degraded = readManifest(dir_ / "deg" / "degraded.jsonl");
  const auto identity = evaluate(*clean_, *clean_, degraded, *extractor_);
  EXPECT_NEAR(identity.restored.spk.mean, 1.0, 1e-9);
  EXPECT_NEAR(identity.restored.logmelL2.mean, 0.0, 1e-9);
  EXPECT_FALSE(identity.restored.wer.has_value());

  const auto baseline = evaluate(degraded, *clean_, degraded, *extractor_);
  for (size_t i = 0; i < baseline.restored.perUtt.size(); ++i) {
    EXPECT_EQ(baseline.restored.perUtt[i].uttId, baseline.degraded.perUtt[i].uttId);
    EXPECT_DOUBLE_EQ(baseline.restored.perUtt[i].spkSimilarity,
                     baseline.degraded.perUtt[i].spkSimilarity);
    EXPECT_DOUBLE_EQ(baseline.restored.perUtt[i].logmelL2, baseline.degraded.perUtt[i].logmelL2);
    EXPECT_GE(baseline.restored.perUtt[i].spkSimilarity, -1.0);
    EXPECT_LE(baseline.restored.perUtt[i].spkSimilarity, 1.0);
  }
  EXPECT_GT(baseline.degraded.logmelL2.mean, 0.0);
}

TEST_F(PipelineTest, EvaluateOrderInvariantAndAligned) {
  const Manifest degraded = readManifest(dir_ / "deg" / "degraded.jsonl");
  Manifest shuffled = degraded;
  std::reverse(shuffled.entries.begin(), shuffled.entries.end());
  const auto a = evaluate(degraded, *clean_, degraded, *extractor_);
  const auto b = evaluate(shuffled, *clean_, shuffled, *extractor_);
  EXPECT_DOUBLE_EQ(a.restored.spk.mean, b.restored.spk.mean);
  EXPECT_DOUBLE_EQ(a.restored.logmelL2.mean, b.restored.logmelL2.mean);

  Manifest missing = degraded;
  missing.entries.pop_back();
  EXPECT_THROW(evaluate(missing, *clean_, degraded, *extractor_), ValidationError);
}

TEST_F(PipelineTest, AsrHookProducesWer) {
  const Manifest degraded = readManifest(dir_ / "deg" / "degraded.jsonl");
  const AsrHook perfect = [](const fs::path&, const std::string& ref) { return ref; };
  const auto r = evaluate(degraded, *clean_, degraded, *extractor_, perfect);
  ASSERT_TRUE(r.restored.wer.has_value());
  EXPECT_DOUBLE_EQ(r.restored.wer->mean, 0.0);
  const auto j = evalReportToJson(r);
  EXPECT_TRUE(j.contains("restored"));
  EXPECT_NE(evalReportTable(r).find("restored"), std::string::npos);
}

TEST_F(PipelineTest, CleanerTrainingReducesLossAndIsDeterministic) {
  CleanerModel a(CleanerConfig::tiny());
  CleanerModel b(CleanerConfig::tiny());
  const auto ra = trainCleaner(a, quick(30), *examples_);
  const auto rb = trainCleaner(b, quick(30), *examples_);
  EXPECT_LT(ra.finalLoss, ra.initialLoss);
  EXPECT_EQ(ra.stepLoss, rb.stepLoss);
  EXPECT_EQ(ra.finalLoss, rb.finalLoss);
}

TEST_F(PipelineTest, CheckpointReloadPreservesLoss) {
  CleanerModel cleaner(CleanerConfig::tiny());
  trainCleaner(cleaner, quick(5), *examples_);
  const fs::path ck = dir_ / "c.ckpt";
  saveCleaner(cleaner, tinySpec(), ck);
  const auto loaded = loadCleaner(ck);
  EXPECT_EQ(loaded.extractor.speechDim, 8);
  EXPECT_EQ(cleanerEvalLoss(loaded.model, *examples_, kDefaultCropFrames),
            cleanerEvalLoss(cleaner, *examples_, kDefaultCropFrames));

  VocoderModel voc(VocoderConfig::tiny());
  const fs::path vk = dir_ / "v.ckpt";
  saveVocoder(voc, tinySpec(), vk);
  const auto lv = loadVocoder(vk);
  const auto inputs = vocoderInputs(VocoderStage::kPretrainClean, *examples_, nullptr);
  EXPECT_EQ(vocoderEvalLoss(lv.model, *examples_, inputs, 4, 0),
            vocoderEvalLoss(voc, *examples_, inputs, 4, 0));
  EXPECT_THROW(loadVocoder(ck), ValidationError);
}

TEST_F(PipelineTest, VocoderStagesUseDifferentInputs) {
  CleanerModel cleaner(CleanerConfig::tiny());
  EXPECT_THROW(vocoderInputs(VocoderStage::kFinetunePredicted, *examples_, nullptr),
               ValidationError);
  const auto pre = vocoderInputs(VocoderStage::kPretrainClean, *examples_, nullptr);
  const auto ft = vocoderInputs(VocoderStage::kFinetunePredicted, *examples_, &cleaner);
  ASSERT_EQ(pre.size(), ft.size());
  EXPECT_GT((pre[0].features.values - ft[0].features.values).cwiseAbs().maxCoeff(), 1e-6);

  TrainConfig t = TrainConfig::vocoderDefaults();
  t.steps = 2;
  t.batchSize = 1;
  t.cropFrames = 4;
  VocoderModel v1(VocoderConfig::tiny());
  const auto r1 = trainVocoder(v1, t, VocoderStage::kPretrainClean, *examples_, nullptr);
  VocoderModel v2(VocoderConfig::tiny());
  const auto r2 =
      trainVocoder(v2, t, VocoderStage::kFinetunePredicted, *examples_, &cleaner);
  EXPECT_NE(r1.inputSource, r2.inputSource);
  VocoderModel v3(VocoderConfig::tiny());
  EXPECT_THROW(trainVocoder(v3, t, VocoderStage::kFinetunePredicted, *examples_, nullptr),
               ValidationError);
  EXPECT_EQ(parseVocoderStage(vocoderStageName(VocoderStage::kFinetunePredicted)),
            VocoderStage::kFinetunePredicted);
}

TEST_F(PipelineTest, NonFiniteLossAborts) {
  std::vector<FeatureExample> poisoned = *examples_;
  for (auto& ex : poisoned) ex.clean.values.col(0).setConstant(std::nan(""));
  CleanerModel cleaner(CleanerConfig::tiny());
  const fs::path logPath = dir_ / "nan.log.jsonl";
  {
    LossLog log(logPath);
    EXPECT_THROW(trainCleaner(cleaner, quick(3), poisoned, &log), TrainingError);
  }
  std::ifstream in(logPath);
  std::string all((std::istreambuf_iterator<char>(in)), {});
  EXPECT_NE(all.find("abort"), std::string::npos);
}

TEST_F(PipelineTest, RestoreContract) {
  const CleanerModel cleaner(CleanerConfig::tiny());
  const VocoderModel voc(VocoderConfig::tiny());
  const auto& e = paired_->entries.front();
  const AudioClip in = loadWav(e.degradedPath);
  const AudioClip a = restore(in, e.transcript, cleaner, voc, *extractor_, 1);
  const AudioClip b = restore(in, e.transcript, cleaner, voc, *extractor_, 1);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.sampleRate, 24000);
  const long k = extractor_->speech(in).frames();
  EXPECT_EQ(long(a.samples.size()), k * 4 * 240);
  ExtractorSpec wide = tinySpec();
  wide.speechDim = 16;
  EXPECT_THROW(checkCompatible(CleanerConfig::tiny(), VocoderConfig::tiny(), wide), ValidationError);
  EXPECT_NO_THROW(checkCompatible(CleanerConfig::tiny(), VocoderConfig::tiny(), tinySpec()));
}
