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

#include "revoice/cli.h"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "revoice/config.h"
#include "revoice/error.h"
#include "revoice/fixtures.h"
#include "revoice/tensor_io.h"
#include "revoice/train_eval.h"

namespace revoice::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string configPath;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
};

struct DegradeArgs {
  std::string manifest, noise, pattern, out, backend;
};
struct ExtractArgs {
  std::string manifest, out;
};
struct TrainArgs {
  std::string paired, out, log, stage = "pretrain_clean", cleaner, init;
  std::optional<int> steps, batchSize;
};
struct RestoreArgs {
  std::string in, transcript, paired, cleaner, vocoder, out, outDir;
};
struct EvalArgs {
  std::string restored, clean, degraded, out;
};
struct SynthArgs {
  std::string features, speaker, vocoder, out;
};
struct FixtureArgs {
  std::string out;
};

std::string readText(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

fs::path dirOf(const fs::path& file) {
  return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

class Runner {
 public:
  Runner(const Common& common, std::ostream& out, std::ostream& err)
      : common_(common), out_(out), err_(err) {}

  RunConfig config(const std::string& subcommand) {
    std::optional<fs::path> path;
    if (!common_.configPath.empty()) path = common_.configPath;
    RunConfig c = loadRunConfig(path);
    if (common_.seed) {
      c.seed = *common_.seed;
      c.cleanerTrain.seed = *common_.seed;
      c.vocoderTrain.seed = *common_.seed;
    }
    if (common_.workers) c.workers = *common_.workers;
    c.validate();
    const char* env = std::getenv(kConfigEnvVar);
    const std::string source = path ? path->string()
        : (env != nullptr && *env != '\0') ? std::string(env) + " (" + kConfigEnvVar + ")"
                                           : std::string("<defaults>");
    err_ << "revoice " << subcommand << ": seed=" << c.seed << " config=" << source << "\n";
    return c;
  }

  void finish(const RunConfig& c, const fs::path& outDir) {
    const auto p = writeEffectiveConfig(c, outDir);
    err_ << "effective config written to " << p.string() << "\n";
  }

  void degradeCorpusCmd(const DegradeArgs& a) {
    RunConfig c = config("degrade-corpus");
    if (!a.pattern.empty()) c.degrade.pattern = a.pattern;
    if (!a.backend.empty()) c.degrade.codecBackend = a.backend;
    c.validate();
    const auto corpus = degradeCorpus(
        readManifest(a.manifest), readManifest(a.noise), parsePattern(c.degrade.pattern), c.seed,
        c.degrade.codecBackend, a.out, c.workers);
    out_ << "degraded " << corpus.paired.entries.size() << " utterances into " << a.out << "\n";
    finish(c, a.out);
  }

  void extractCmd(const ExtractArgs& a) {
    RunConfig c = config("extract-features");
    const Manifest m = readManifest(a.manifest);
    validateManifest(m);
    const auto ext = makeExtractor(c.extractor);
    for (const auto& e : m.entries) {
      AudioClip clip = loadWav(e.audioPath);
      clip.uttId = e.uttId;
      writeFeatureFiles(
          a.out, e.uttId, ext->speech(clip), ext->text(e.transcript, e.uttId), ext->speaker(clip));
    }
    out_ << "wrote features for " << m.entries.size() << " utterances to " << a.out << "\n";
    finish(c, a.out);
  }

  void trainCleanerCmd(const TrainArgs& a) {
    RunConfig c = config("train-cleaner");
    if (a.steps) c.cleanerTrain.steps = *a.steps;
    if (a.batchSize) c.cleanerTrain.batchSize = *a.batchSize;
    c.validate();
    const auto ext = makeExtractor(c.extractor);
    const auto examples = loadFeatureExamples(readPairedManifest(a.paired), *ext);
    CleanerModel model(c.cleaner);
    LossLog log(a.log.empty() ? fs::path(a.out + ".log.jsonl") : fs::path(a.log));
    const auto r = trainCleaner(model, c.cleanerTrain, examples, &log, [&](int) {
      saveCleaner(model, c.extractor, a.out);
    });
    saveCleaner(model, c.extractor, a.out);
    out_ << "cleaner loss " << r.initialLoss << " -> " << r.finalLoss << "; saved " << a.out << "\n";
    finish(c, dirOf(a.out));
  }

  void trainVocoderCmd(const TrainArgs& a) {
    RunConfig c = config("train-vocoder");
    if (a.steps) c.vocoderTrain.steps = *a.steps;
    if (a.batchSize) c.vocoderTrain.batchSize = *a.batchSize;
    c.validate();
    const VocoderStage stage = parseVocoderStage(a.stage);
    std::optional<LoadedCleaner> cleaner;
    if (!a.cleaner.empty()) {
      cleaner.emplace(loadCleaner(a.cleaner));
      c.extractor = cleaner->extractor;
    } else if (stage == VocoderStage::kFinetunePredicted) {
      throw ValidationError("train-vocoder --stage finetune_predicted needs --cleaner");
    }
    std::optional<VocoderModel> model;
    if (!a.init.empty()) {
      LoadedVocoder init = loadVocoder(a.init);
      c.vocoder = init.model.config();
      model.emplace(std::move(init.model));
    } else {
      model.emplace(c.vocoder);
    }
    if (cleaner) checkCompatible(cleaner->model.config(), c.vocoder, c.extractor);
    const auto ext = makeExtractor(c.extractor);
    const auto examples = loadFeatureExamples(readPairedManifest(a.paired), *ext);
    LossLog log(a.log.empty() ? fs::path(a.out + ".log.jsonl") : fs::path(a.log));
    const auto r = trainVocoder(
        *model, c.vocoderTrain, stage, examples, cleaner ? &cleaner->model : nullptr, &log,
        [&](int) { saveVocoder(*model, c.extractor, a.out); });
    saveVocoder(*model, c.extractor, a.out);
    out_ << "vocoder (" << vocoderStageName(stage) << ", " << r.inputSource << ") stft loss "
         << r.initialLoss << " -> " << r.finalLoss << "; saved " << a.out << "\n";
    finish(c, dirOf(a.out));
  }

  void restoreCmd(const RestoreArgs& a) {
    RunConfig c = config("restore");
    const LoadedCleaner cleaner = loadCleaner(a.cleaner);
    const LoadedVocoder vocoder = loadVocoder(a.vocoder);
    if (toJson(cleaner.extractor) != toJson(vocoder.extractor)) {
      throw ValidationError("cleaner and vocoder checkpoints use different extractors");
    }
    c.extractor = cleaner.extractor;
    c.cleaner = cleaner.model.config();
    c.vocoder = vocoder.model.config();
    checkCompatible(c.cleaner, c.vocoder, c.extractor);
    const auto ext = makeExtractor(cleaner.extractor);
    if (!a.paired.empty()) {
      if (a.outDir.empty()) throw ValidationError("restore --paired needs --out-dir");
      const PairedManifest pm = readPairedManifest(a.paired);
      Manifest restored;
      fs::create_directories(a.outDir);
      for (const auto& e : pm.entries) {
        AudioClip in = loadWav(e.degradedPath);
        in.uttId = e.uttId;
        const AudioClip y = restore(in, e.transcript, cleaner.model, vocoder.model, *ext, c.seed);
        const std::string rel = e.uttId + ".wav";
        saveWav(y, fs::path(a.outDir) / rel);
        restored.entries.push_back({e.uttId, rel, e.transcript, e.speakerId});
      }
      writeManifest(restored, fs::path(a.outDir) / "restored.jsonl");
      out_ << "restored " << restored.entries.size() << " utterances into " << a.outDir << "\n";
      finish(c, a.outDir);
      return;
    }
    if (a.in.empty() || a.out.empty()) {
      throw ValidationError("restore needs --in and --out (or --paired and --out-dir)");
    }
    AudioClip in = loadWav(a.in);
    in.uttId = fs::path(a.in).stem().string();
    const std::string transcript = a.transcript.empty() ? std::string() : readText(a.transcript);
    const AudioClip y = restore(in, transcript, cleaner.model, vocoder.model, *ext, c.seed);
    saveWav(y, a.out);
    out_ << "wrote " << a.out << " (" << y.samples.size() << " samples at " << y.sampleRate
         << " Hz)\n";
    finish(c, dirOf(a.out));
  }

  void evaluateCmd(const EvalArgs& a) {
    RunConfig c = config("evaluate");
    const auto ext = makeExtractor(c.extractor);
    const EvalReport r = evaluate(
        readManifest(a.restored), readManifest(a.clean), readManifest(a.degraded), *ext, {},
        c.workers);
    out_ << evalReportTable(r);
    if (!a.out.empty()) {
      if (dirOf(a.out) != ".") fs::create_directories(dirOf(a.out));
      std::ofstream f(a.out);
      if (!f) throw IoError("cannot write " + a.out);
      f << evalReportToJson(r).dump(2) << "\n";
      finish(c, dirOf(a.out));
    }
  }

  void synthesizeCmd(const SynthArgs& a) {
    RunConfig c = config("synthesize");
    const LoadedVocoder vocoder = loadVocoder(a.vocoder);
    c.vocoder = vocoder.model.config();
    SpeechFeatures f;
    f.values = matrixFromTensor(readTensor(a.features));
    const Eigen::VectorXd d = vectorFromTensor(readTensor(a.speaker));
    const AudioClip y = synthesize(vocoder.model, f, SpeakerEmbedding{d, true}, c.seed);
    saveWav(y, a.out);
    out_ << "wrote " << a.out << " (" << y.samples.size() << " samples)\n";
    finish(c, dirOf(a.out));
  }

  void fixturesCmd(const FixtureArgs& a) {
    RunConfig c = config("make-fixtures");
    const auto paths = writeFixtureCorpus(makeFixtureCorpus(c.seed), a.out);
    out_ << "wrote " << paths.cleanManifest.string() << " and " << paths.noiseManifest.string()
         << "\n";
  }

 private:
  Common common_;
  std::ostream& out_;
  std::ostream& err_;
};

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"revoice: speech restoration by feature cleaning and re-synthesis", "revoice"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.configPath, "JSON config file (default: $REVOICE_CONFIG)");
  app.add_option("--seed", common.seed, "Run seed (also sets the training seeds)");
  app.add_option("--workers", common.workers, "Parallel workers for degradation/evaluation")
      ->check(CLI::PositiveNumber);

  DegradeArgs dg;
  auto* degradeSub = app.add_subcommand("degrade-corpus", "Synthesize a paired degraded corpus");
  degradeSub->add_option("--manifest", dg.manifest, "Clean manifest (JSONL)")->required();
  degradeSub->add_option("--noise", dg.noise, "Noise manifest (JSONL)")->required();
  degradeSub->add_option("--pattern", dg.pattern, "noise | reverb | codec | reverb+codec");
  degradeSub->add_option("--codec-backend", dg.backend, "surrogate | external");
  degradeSub->add_option("--out", dg.out, "Output directory")->required();

  ExtractArgs ex;
  auto* extractSub = app.add_subcommand("extract-features", "Write feature tensors for a manifest");
  extractSub->add_option("--manifest", ex.manifest)->required();
  extractSub->add_option("--out", ex.out, "Output directory")->required();

  TrainArgs tc;
  auto* cleanerSub = app.add_subcommand("train-cleaner", "Train the feature cleaner");
  cleanerSub->add_option("--paired", tc.paired, "Paired manifest")->required();
  cleanerSub->add_option("--out", tc.out, "Checkpoint path")->required();
  cleanerSub->add_option("--log", tc.log, "Loss log (JSONL)");
  cleanerSub->add_option("--steps", tc.steps)->check(CLI::PositiveNumber);
  cleanerSub->add_option("--batch-size", tc.batchSize)->check(CLI::PositiveNumber);

  TrainArgs tv;
  auto* vocoderSub = app.add_subcommand("train-vocoder", "Train or fine-tune the vocoder");
  vocoderSub->add_option("--paired", tv.paired, "Paired manifest")->required();
  vocoderSub->add_option("--out", tv.out, "Checkpoint path")->required();
  vocoderSub->add_option("--stage", tv.stage, "pretrain_clean | finetune_predicted");
  vocoderSub->add_option("--cleaner", tv.cleaner, "Cleaner checkpoint (finetune stage)");
  vocoderSub->add_option("--init", tv.init, "Vocoder checkpoint to start from");
  vocoderSub->add_option("--log", tv.log, "Loss log (JSONL)");
  vocoderSub->add_option("--steps", tv.steps)->check(CLI::PositiveNumber);
  vocoderSub->add_option("--batch-size", tv.batchSize)->check(CLI::PositiveNumber);

  RestoreArgs rs;
  auto* restoreSub = app.add_subcommand("restore", "Restore degraded speech");
  restoreSub->add_option("--in", rs.in, "Degraded WAV");
  restoreSub->add_option("--transcript", rs.transcript, "Text file with the transcript");
  restoreSub->add_option("--paired", rs.paired, "Restore every degraded clip of a paired manifest");
  restoreSub->add_option("--cleaner", rs.cleaner)->required();
  restoreSub->add_option("--vocoder", rs.vocoder)->required();
  restoreSub->add_option("--out", rs.out, "Output WAV");
  restoreSub->add_option("--out-dir", rs.outDir, "Output directory for --paired");

  EvalArgs ev;
  auto* evalSub = app.add_subcommand("evaluate", "Objective evaluation");
  evalSub->add_option("--restored", ev.restored, "Restored manifest")->required();
  evalSub->add_option("--clean", ev.clean, "Clean manifest")->required();
  evalSub->add_option("--degraded", ev.degraded, "Degraded manifest")->required();
  evalSub->add_option("--out", ev.out, "Report JSON");

  SynthArgs sy;
  auto* synthSub = app.add_subcommand("synthesize", "Vocode a feature tensor");
  synthSub->add_option("--features", sy.features, "[K x D] tensor file")->required();
  synthSub->add_option("--speaker", sy.speaker, "[Q] tensor file")->required();
  synthSub->add_option("--vocoder", sy.vocoder)->required();
  synthSub->add_option("--out", sy.out, "Output WAV")->required();

  FixtureArgs fx;
  auto* fixturesSub = app.add_subcommand("make-fixtures", "Write the synthetic toy corpus");
  fixturesSub->add_option("--out", fx.out)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  const auto subs = app.get_subcommands({});
  for (size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config" || a == "--seed" || a == "--workers") {
      ++i;
      continue;
    }
    if (a.empty() || a[0] == '-') continue;
    const bool known = std::any_of(
        subs.begin(), subs.end(), [&](const CLI::App* sub) { return sub->get_name() == a; });
    if (!known) {
      err << "error[usage]: unknown subcommand '" << a << "'\n" << app.help();
      return kExitUsage;
    }
    break;
  }
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error[usage]: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  Runner runner(common, out, err);
  try {
    if (degradeSub->parsed()) runner.degradeCorpusCmd(dg);
    else if (extractSub->parsed()) runner.extractCmd(ex);
    else if (cleanerSub->parsed()) runner.trainCleanerCmd(tc);
    else if (vocoderSub->parsed()) runner.trainVocoderCmd(tv);
    else if (restoreSub->parsed()) runner.restoreCmd(rs);
    else if (evalSub->parsed()) runner.evaluateCmd(ev);
    else if (synthSub->parsed()) runner.synthesizeCmd(sy);
    else if (fixturesSub->parsed()) runner.fixturesCmd(fx);
  } catch (const Error& e) {
    err << "error[" << e.category() << "]: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

} // namespace revoice::cli
