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

// Acceptance checks. Prints one [PASS]/[FAIL] line per criterion and exits
// nonzero if any fails. Optional arguments select criteria by number.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "oracles.h"
#include "revoice/cleaner.h"
#include "revoice/cli.h"
#include "revoice/config.h"
#include "revoice/degrade.h"
#include "revoice/error.h"
#include "revoice/fixtures.h"
#include "revoice/rng.h"
#include "revoice/train_eval.h"
#include "revoice/vocoder.h"

using namespace revoice;
using ag::Var;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

RowMatrix randn(long r, long c, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  RowMatrix m(r, c);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

AudioClip voiced(size_t n, uint64_t seed) {
  Rng rng(seed);
  const double f0 = rng.uniform(90, 250);
  AudioClip c;
  c.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double t = double(i) / kRate24k;
    const double env = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * 2.5 * t);
    c.samples[i] = 0.3 * env *
        (std::sin(2 * std::numbers::pi * f0 * t) + 0.4 * std::sin(2 * std::numbers::pi * 3 * f0 * t)) +
        0.005 * rng.uniform(-1, 1);
  }
  return c;
}

// ------------------------------------------------------------------ 1

Verdict codecSampler() {
  Verdict v;
  constexpr int kDraws = 10000;
  std::map<Codec, int> counts;
  std::map<Codec, std::map<double, int>> rates;
  for (int i = 0; i < kDraws; ++i) {
    const auto r = sampleRecipe(uint64_t(i), DegradationPattern::kReverbCodec);
    counts[r.codec->codec]++;
    rates[r.codec->codec][r.codec->bitrate]++;
  }
  std::ostringstream d;
  for (Codec c : {Codec::kMp3, Codec::kVorbis, Codec::kALaw, Codec::kAmrWb, Codec::kOpus}) {
    const double p = double(counts[c]) / kDraws;
    v.require(std::abs(p - codecProbability(c)) <= 0.015, codecName(c) + " probability " + std::to_string(p));
    const auto allowed = allowedBitrates(c);
    if (allowed.size() < 2) {
      v.require(rates[c].size() == 1, codecName(c) + " has a single bitrate");
      continue;
    }
    const double expected = double(counts[c]) / double(allowed.size());
    double stat = 0.0;
    for (double b : allowed) stat += std::pow(rates[c][b] - expected, 2) / expected;
    v.require(rates[c].size() == allowed.size(), codecName(c) + " drew an unlisted bitrate");
    const double pv = oracle::chiSquarePValue(stat, double(allowed.size() - 1));
    d << codecName(c) << " p=" << pv << " ";
    v.require(pv > 0.01, codecName(c) + " bitrate chi-square p " + std::to_string(pv));
  }
  if (v.pass) v.detail = d.str();
  return v;
}

// ------------------------------------------------------------------ 2

Verdict rirCorrectness() {
  Verdict v;
  RoomSpec free;
  free.source = {1.0, 1.5, 1.2};
  free.mic = {3.7, 2.1, 1.6};
  RirOptions opts;
  opts.reflection = 0.0;
  const Rir rir = generateRir(free, kRate24k, 1, opts);
  const long expected = std::lround(kRate24k * distance(free.source, free.mic) / kSpeedOfSound);
  size_t peak = 0;
  size_t nonzero = 0;
  for (size_t i = 0; i < rir.taps.size(); ++i) {
    if (std::abs(rir.taps[i]) > std::abs(rir.taps[peak])) peak = i;
    if (rir.taps[i] != 0.0) ++nonzero;
  }
  v.require(std::abs(long(peak) - expected) <= 1, "free-field delay");
  v.require(nonzero == 1, "free-field has extra taps");

  double worst = 0.0;
  for (uint64_t i = 0; i < 100; ++i) {
    const RoomSpec room = sampleRoom(1000 + i);
    const double est = oracle::schroederRt60(generateRir(room, kRate24k, i).taps, kRate24k);
    const double rel = std::abs(est - room.rt60) / room.rt60;
    worst = std::max(worst, rel);
    v.require(rel <= 0.2, "room " + std::to_string(i) + " rt60 " + std::to_string(room.rt60) +
                              " estimated " + std::to_string(est));
  }
  if (v.pass) v.detail = "worst relative RT60 error " + std::to_string(worst);
  return v;
}

// ------------------------------------------------------------------ 3

Verdict snrMixing() {
  Verdict v;
  Rng rng(77);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double snr = rng.uniform(kMinSnrDb, kMaxSnrDb);
    const AudioClip speech = voiced(size_t(rng.uniformInt(12000, 36000)), 10 + i);
    AudioClip noise;
    noise.samples.resize(size_t(rng.uniformInt(5000, 40000)));
    const double amp = rng.uniform(0.01, 0.8);
    for (double& x : noise.samples) x = amp * rng.normal();
    const MixComponents m = mixComponents(speech, noise, snr, uint64_t(i));
    const double measured = 10 * std::log10(
        oracle::activePower(m.speech, kRate24k) / oracle::meanPower(m.noise));
    worst = std::max(worst, std::abs(measured - snr));
  }
  v.require(worst <= 0.1, "worst deviation " + std::to_string(worst) + " dB");
  if (v.pass) v.detail = "worst deviation " + std::to_string(worst) + " dB";
  return v;
}

// ------------------------------------------------------------------ 4

Verdict filmAndLoss() {
  Verdict v;
  nn::ParamSet params;
  Rng rng(1);
  const FilmParams f = FilmParams::create(params, "f", 5, 3, rng);
  const RowMatrix a = randn(6, 5, 2);
  const Eigen::RowVectorXd b = randn(1, 3, 3);
  const RowMatrix ref = oracle::film(
      a, b, f.conv1.w.value(), f.conv1.b.value(), f.conv2.w.value(), f.conv2.b.value());
  v.require((film(a, b, f) - ref).cwiseAbs().maxCoeff() < 1e-12, "random case vs formula");

  // conv1 zeroed and conv2 a centre-tap identity on the first 3 channels:
  // every frame becomes (b0, b1, b2, 0, 0).
  Var w1 = f.conv1.w, b1 = f.conv1.b, w2 = f.conv2.w, b2 = f.conv2.b;
  w1.mutableValue().setZero();
  b1.mutableValue().setZero();
  w2.mutableValue().setZero();
  b2.mutableValue().setZero();
  for (int c = 0; c < 3; ++c) w2.mutableValue()(1 * 3 + c, c) = 1.0;
  const RowMatrix fixed = film(a, b, f);
  double err = 0.0;
  for (long k = 0; k < fixed.rows(); ++k) {
    for (int c = 0; c < 5; ++c) err = std::max(err, std::abs(fixed(k, c) - (c < 3 ? b(c) : 0.0)));
  }
  v.require(err == 0.0, "fixed-point case");
  w2.mutableValue().setZero();
  v.require(film(a, b, f).cwiseAbs().maxCoeff() == 0.0, "zero map");

  const RowMatrix s = RowMatrix::Identity(2, 2);
  const auto r = cleanerLoss(s, std::vector<CleanerPrediction>{{RowMatrix::Zero(2, 2), RowMatrix::Zero(2, 2)}});
  v.require(r.perIteration[0].prePostnet == 5.0 && r.perIteration[0].postPostnet == 5.0,
            "identity example");
  v.require(oracle::threeTermLoss(s, RowMatrix::Zero(2, 2)) == 5.0, "oracle identity example");
  const RowMatrix t = randn(4, 3, 9);
  v.require(cleanerLoss(t, std::vector<CleanerPrediction>{{t, t}}).total == 0.0, "zero at target");
  return v;
}

// ------------------------------------------------------------------ 5

Verdict gradientFidelity() {
  Verdict v;
  constexpr int kDraws = 20;
  double worstCleaner = 0.0, worstDisc = 0.0;
  for (int draw = 0; draw < kDraws; ++draw) {
    CleanerConfig cc = CleanerConfig::tiny();
    cc.seed = uint64_t(100 + draw);
    const CleanerModel cleaner(cc);
    const RowMatrix x = randn(4, cc.speechDim, 200 + draw);
    const RowMatrix text = randn(3, cc.textDim, 300 + draw);
    const RowMatrix spk = randn(1, cc.speakerDim, 400 + draw);
    const RowMatrix target = randn(4, cc.speechDim, 500 + draw);
    auto closs = [&] {
      return cleanerLoss(ag::constant(target),
          cleaner.forward(ag::constant(x), ag::constant(text), ag::constant(spk)), nullptr);
    };
    std::vector<Var> cp;
    for (const auto& [name, p] : cleaner.params().entries()) cp.push_back(p);
    closs().backward();
    worstCleaner = std::max(worstCleaner,
        oracle::finiteDifference(cp, [&] { return closs().scalar(); }, 40).relError);

    VocoderConfig vc = VocoderConfig::tiny();
    vc.seed = uint64_t(600 + draw);
    VocoderModel voc(vc);
    const Var real = ag::constant(randn(60, 1, 700 + draw, 0.5));
    const Var fake = ag::constant(randn(60, 1, 800 + draw, 0.5));
    auto dloss = [&] {
      return discriminatorLoss(voc.discriminator()(real), voc.discriminator()(fake));
    };
    std::vector<Var> dp;
    for (const auto& [name, p] : voc.discriminatorParams().entries()) dp.push_back(p);
    dloss().backward();
    worstDisc = std::max(worstDisc,
        oracle::finiteDifference(dp, [&] { return dloss().scalar(); }, 40).relError);
  }
  v.require(worstCleaner < 1e-3, "cleaner relative error " + std::to_string(worstCleaner));
  v.require(worstDisc < 1e-3, "discriminator relative error " + std::to_string(worstDisc));
  std::ostringstream d;
  d << kDraws << " draws, worst cleaner " << worstCleaner << ", discriminator " << worstDisc;
  if (v.pass) v.detail = d.str();
  return v;
}

// ------------------------------------------------------------------ 6

Verdict sharedRefinement() {
  Verdict v;
  std::vector<size_t> counts;
  for (int n : {1, 2, 3}) {
    CleanerConfig c = CleanerConfig::deskScale();
    c.numIterations = n;
    counts.push_back(CleanerModel(c).params().scalarCount());
  }
  v.require(counts[0] == counts[1] && counts[1] == counts[2], "parameter count varies");
  const CleanerModel m(CleanerConfig::tiny());
  const auto& c = m.config();
  const RowMatrix x = randn(5, c.speechDim, 1), text = randn(3, c.textDim, 2),
                  spk = randn(1, c.speakerDim, 3);
  const double delta = (m.step(x, text, spk, 0) - m.step(x, text, spk, 1)).cwiseAbs().maxCoeff();
  v.require(delta > 1e-9, "iteration index has no effect");
  if (v.pass) {
    v.detail = std::to_string(counts[0]) + " parameters for 1/2/3 iterations; index delta " +
               std::to_string(delta);
  }
  return v;
}

// ------------------------------------------------------------------ 7

Verdict vocoderContracts() {
  Verdict v;
  const VocoderModel m(VocoderConfig::tiny());
  const auto& c = m.config();
  int product = 1;
  for (int f : c.ublockFactors) product *= f;
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const long k = rng.uniformInt(1, 24);
    SpeechFeatures feats;
    feats.values = randn(k, c.featureDim, 10 + trial, 0.5);
    Eigen::VectorXd d = randn(c.speakerDim, 1, 20 + trial);
    const AudioClip y = synthesize(m, feats, {d / d.norm(), true}, uint64_t(trial));
    v.require(long(y.samples.size()) == k * 4 * product, "length law at K=" + std::to_string(k));
    v.require(std::abs(peakAbs(y.samples) - 0.9) <= 1e-6, "peak not 0.9");
  }
  const VocoderModel full(VocoderConfig{});
  v.require(full.discriminator().periods() == std::vector<int>{2, 3, 5, 7, 11, 13, 17, 19},
            "MPD periods");
  v.require(full.discriminator().branchCount() == 8, "MPD branch count");
  VocoderConfig bad;
  bad.ublockFactors = {5, 4, 2, 2, 2};
  bool rejected = false;
  try {
    bad.validate();
  } catch (const ValidationError&) {
    rejected = true;
  }
  v.require(rejected, "inconsistent factors accepted");
  return v;
}

// ------------------------------------------------------------------ 8

constexpr int kTrendCleanerSteps = 500;
constexpr int kTrendVocoderSteps = 3000;
constexpr int kTrendFinetuneSteps = 600;

Verdict trendReproduction() {
  Verdict v;
  const fs::path dir = fs::temp_directory_path() / "revoice_acceptance_trend";
  fs::remove_all(dir);
  const auto paths = writeFixtureCorpus(makeFixtureCorpus(0), dir / "fixtures");
  const Manifest clean = readManifest(paths.cleanManifest);
  const RunConfig rc;
  degradeCorpus(clean, readManifest(paths.noiseManifest), parsePattern(rc.degrade.pattern), 7,
                "surrogate", dir / "deg");
  const PairedManifest paired = readPairedManifest(dir / "deg" / "paired.jsonl");
  const auto extractor = makeExtractor(rc.extractor);
  const auto examples = loadFeatureExamples(paired, *extractor);

  CleanerModel cleaner(rc.cleaner);
  TrainConfig ct = rc.cleanerTrain;
  ct.steps = kTrendCleanerSteps;
  trainCleaner(cleaner, ct, examples);

  VocoderModel voc(rc.vocoder);
  TrainConfig vt = rc.vocoderTrain;
  vt.steps = kTrendVocoderSteps;
  vt.advStartStep = kTrendVocoderSteps;
  trainVocoder(voc, vt, VocoderStage::kPretrainClean, examples, nullptr);
  TrainConfig ft = vt;
  ft.steps = kTrendFinetuneSteps;
  ft.advStartStep = kTrendFinetuneSteps;
  ft.warmupSteps = 0;
  trainVocoder(voc, ft, VocoderStage::kFinetunePredicted, examples, &cleaner);

  Manifest restored, degraded;
  for (const auto& e : paired.entries) {
    const fs::path degPath = e.degradedPath;
    AudioClip in = loadWav(degPath);
    const fs::path out = dir / "restored" / (e.uttId + ".wav");
    saveWav(restore(in, e.transcript, cleaner, voc, *extractor, 0), out);
    restored.entries.push_back({e.uttId, out.string(), e.transcript, e.speakerId});
    degraded.entries.push_back({e.uttId, degPath.string(), e.transcript, e.speakerId});
  }
  const auto report = evaluate(restored, clean, degraded, *extractor);
  std::ostringstream d;
  d << "logmel_l2 restored " << report.restored.logmelL2.mean << " vs degraded "
    << report.degraded.logmelL2.mean << "; SPK restored " << report.restored.spk.mean
    << " vs degraded " << report.degraded.spk.mean;
  v.require(report.restored.logmelL2.mean < report.degraded.logmelL2.mean, "logmel not improved");
  v.require(report.restored.spk.mean > report.degraded.spk.mean, "SPK not improved");
  v.detail = d.str() + (v.pass ? "" : " (" + v.detail + ")");
  fs::remove_all(dir);
  return v;
}

// ------------------------------------------------------------------ 9

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Verdict endToEndDeterminism() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / "revoice_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path config = root / "config.json";
  std::ofstream(config) << R"({
    "extractor": {"speech_dim": 8, "text_dim": 4, "speaker_dim": 4},
    "cleaner": {"num_blocks": 1, "block_dim": 8, "attn_hidden": 8, "num_heads": 2,
                "speech_dim": 8, "text_dim": 4, "speaker_dim": 4, "conv_kernel": 3,
                "ff_multiplier": 2, "iter_embed_dim": 8},
    "vocoder": {"feature_dim": 8, "speaker_dim": 4, "hidden_dim": 16, "iter_embed_dim": 8,
                "mpd_channels": [4, 4]},
    "cleaner_train": {"steps": 5, "batch_size": 2},
    "vocoder_train": {"steps": 3, "batch_size": 1, "crop_frames": 4, "adv_start_step": 1}
  })";
  auto cli = [&](std::vector<std::string> args) {
    std::ostringstream out, err;
    args.insert(args.begin(), {"--config", config.string(), "--seed", "1234"});
    const int code = cli::run(args, out, err);
    if (code != 0) v.require(false, args[4] + " failed: " + err.str());
    return code == 0;
  };
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    const fs::path d = root / ("run" + std::to_string(run));
    const std::string s = d.string();
    const bool ok = cli({"make-fixtures", "--out", s + "/fx"}) &&
        cli({"degrade-corpus", "--manifest", s + "/fx/clean.jsonl", "--noise",
             s + "/fx/noise.jsonl", "--out", s + "/deg"}) &&
        cli({"train-cleaner", "--paired", s + "/deg/paired.jsonl", "--out", s + "/cleaner.ckpt"}) &&
        cli({"train-vocoder", "--paired", s + "/deg/paired.jsonl", "--out", s + "/vocoder.ckpt"}) &&
        cli({"restore", "--paired", s + "/deg/paired.jsonl", "--cleaner", s + "/cleaner.ckpt",
             "--vocoder", s + "/vocoder.ckpt", "--out-dir", s + "/restored"});
    if (!ok) return v;
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(d)) {
      if (!e.is_regular_file()) continue;
      const auto ext = e.path().extension();
      if (ext == ".wav" || ext == ".ckpt" || ext == ".jsonl") {
        files[fs::relative(e.path(), d).string()] = slurp(e.path());
      }
    }
    runs.push_back(std::move(files));
  }
  size_t wavs = 0;
  for (const auto& [name, bytes] : runs[0]) {
    if (name.ends_with(".wav")) ++wavs;
    const auto it = runs[1].find(name);
    v.require(it != runs[1].end() && it->second == bytes, name + " differs");
  }
  v.require(runs[0].size() == runs[1].size(), "file sets differ");
  v.require(fs::exists(root / "run0" / "restored" / "utt0.wav"), "no restored output");
  if (v.pass) v.detail = std::to_string(runs[0].size()) + " files identical (" +
                         std::to_string(wavs) + " wav)";
  fs::remove_all(root);
  return v;
}

} // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"codec sampler fidelity", codecSampler},
      {"RIR correctness", rirCorrectness},
      {"SNR mixing", snrMixing},
      {"FiLM and loss exactness", filmAndLoss},
      {"gradient fidelity", gradientFidelity},
      {"shared-parameter refinement", sharedRefinement},
      {"vocoder contracts", vocoderContracts},
      {"desk-scale trend reproduction", trendReproduction},
      {"end-to-end determinism", endToEndDeterminism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << id << ". " << criteria[i].first << " ("
              << std::fixed << std::setprecision(1) << secs << " s)"
              << (v.detail.empty() ? "" : ": " + v.detail) << std::endl;
    std::cout.unsetf(std::ios::fixed);
    std::cout << std::setprecision(6);
  }
  return failures == 0 ? 0 : 1;
}
