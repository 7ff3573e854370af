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

#include "revoice/config.h"

#include <cstdlib>
#include <fstream>

#include "revoice/degrade.h"
#include "revoice/error.h"

namespace revoice {

using nlohmann::json;

namespace {

void mergeStrict(json& base, const json& overlay, const std::string& where) {
  if (!overlay.is_object()) {
    throw ValidationError(
        "config section '" + (where.empty() ? std::string("<root>") : where) +
        "' must be an object");
  }
  for (const auto& [key, value] : overlay.items()) {
    if (!base.contains(key)) {
      throw ValidationError("unknown config key '" + where + key + "'");
    }
    json& slot = base[key];
    if (slot.is_object() && value.is_object()) {
      mergeStrict(slot, value, where + key + ".");
    } else {
      slot = value;
    }
  }
}

json merged(const json& defaults, const json& overlay, const std::string& where) {
  json base = defaults;
  mergeStrict(base, overlay, where);
  return base;
}

template <typename Fn>
auto parsing(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ValidationError("bad " + what + " config: " + e.what());
  }
}

} // namespace

// ---------------------------------------------------------------- to json

json toJson(const ExtractorSpec& s) {
  return {
      {"kind", extractorKindName(s.kind)},
      {"speech_dim", s.speechDim},
      {"text_dim", s.textDim},
      {"speaker_dim", s.speakerDim},
      {"seed", s.seed},
      {"external_dir", s.externalDir},
  };
}

json toJson(const CleanerConfig& c) {
  return {
      {"num_blocks", c.numBlocks},
      {"block_dim", c.blockDim},
      {"attn_hidden", c.attnHidden},
      {"num_heads", c.numHeads},
      {"speech_dim", c.speechDim},
      {"text_dim", c.textDim},
      {"speaker_dim", c.speakerDim},
      {"n_iterations", c.numIterations},
      {"postnet_layers", c.postnetLayers},
      {"postnet_kernel", c.postnetKernel},
      {"conv_kernel", c.convKernel},
      {"ff_multiplier", c.ffMultiplier},
      {"iter_embed_dim", c.iterEmbedDim},
      {"seed", c.seed},
  };
}

json toJson(const VocoderConfig& c) {
  json res = json::array();
  for (const auto& r : c.stftResolutions) {
    res.push_back({{"fft", r.fftSize}, {"hop", r.hop}, {"window", r.window}});
  }
  return {
      {"feature_rate_in", c.featureRateIn},
      {"upsampled_rate", c.upsampledRate},
      {"sample_rate", c.sampleRate},
      {"ublock_factors", c.ublockFactors},
      {"n_refine_iterations", c.nRefineIterations},
      {"lambda_gain", c.lambdaGain},
      {"mpd_periods", c.mpdPeriods},
      {"stft_loss_resolutions", res},
      {"feature_dim", c.featureDim},
      {"speaker_dim", c.speakerDim},
      {"hidden_dim", c.hiddenDim},
      {"iter_embed_dim", c.iterEmbedDim},
      {"mpd_channels", c.mpdChannels},
      {"mpd_kernel", c.mpdKernel},
      {"mpd_stride", c.mpdStride},
      {"seed", c.seed},
  };
}

json toJson(const TrainConfig& c) {
  return {
      {"steps", c.steps},
      {"batch_size", c.batchSize},
      {"lr", c.lr},
      {"warmup_steps", c.warmupSteps},
      {"clip_norm", c.clipNorm},
      {"seed", c.seed},
      {"checkpoint_every", c.checkpointEvery},
      {"crop_frames", c.cropFrames},
      {"stft_weight", c.stftWeight},
      {"adv_weight", c.advWeight},
      {"fm_weight", c.fmWeight},
      {"adv_start_step", c.advStartStep},
      {"adv_ramp_steps", c.advRampSteps},
      {"disc_lr", c.discLr},
  };
}

json toJson(const RunConfig& c) {
  return {
      {"seed", c.seed},
      {"workers", c.workers},
      {"extractor", toJson(c.extractor)},
      {"cleaner", toJson(c.cleaner)},
      {"vocoder", toJson(c.vocoder)},
      {"cleaner_train", toJson(c.cleanerTrain)},
      {"vocoder_train", toJson(c.vocoderTrain)},
      {"degrade", {{"pattern", c.degrade.pattern}, {"codec_backend", c.degrade.codecBackend}}},
  };
}

// -------------------------------------------------------------- from json

ExtractorSpec extractorSpecFromJson(const json& j) {
  const json m = merged(toJson(ExtractorSpec{}), j, "extractor.");
  return parsing("extractor", [&] {
    ExtractorSpec s;
    s.kind = parseExtractorKind(m.at("kind").get<std::string>());
    s.speechDim = m.at("speech_dim").get<int>();
    s.textDim = m.at("text_dim").get<int>();
    s.speakerDim = m.at("speaker_dim").get<int>();
    s.seed = m.at("seed").get<uint64_t>();
    s.externalDir = m.at("external_dir").get<std::string>();
    return s;
  });
}

CleanerConfig cleanerConfigFromJson(const json& j) {
  const json m = merged(toJson(CleanerConfig{}), j, "cleaner.");
  return parsing("cleaner", [&] {
    CleanerConfig c;
    c.numBlocks = m.at("num_blocks").get<int>();
    c.blockDim = m.at("block_dim").get<int>();
    c.attnHidden = m.at("attn_hidden").get<int>();
    c.numHeads = m.at("num_heads").get<int>();
    c.speechDim = m.at("speech_dim").get<int>();
    c.textDim = m.at("text_dim").get<int>();
    c.speakerDim = m.at("speaker_dim").get<int>();
    c.numIterations = m.at("n_iterations").get<int>();
    c.postnetLayers = m.at("postnet_layers").get<int>();
    c.postnetKernel = m.at("postnet_kernel").get<int>();
    c.convKernel = m.at("conv_kernel").get<int>();
    c.ffMultiplier = m.at("ff_multiplier").get<int>();
    c.iterEmbedDim = m.at("iter_embed_dim").get<int>();
    c.seed = m.at("seed").get<uint64_t>();
    return c;
  });
}

VocoderConfig vocoderConfigFromJson(const json& j) {
  const json m = merged(toJson(VocoderConfig{}), j, "vocoder.");
  return parsing("vocoder", [&] {
    VocoderConfig c;
    c.featureRateIn = m.at("feature_rate_in").get<double>();
    c.upsampledRate = m.at("upsampled_rate").get<double>();
    c.sampleRate = m.at("sample_rate").get<int>();
    c.ublockFactors = m.at("ublock_factors").get<std::vector<int>>();
    c.nRefineIterations = m.at("n_refine_iterations").get<int>();
    c.lambdaGain = m.at("lambda_gain").get<double>();
    c.mpdPeriods = m.at("mpd_periods").get<std::vector<int>>();
    c.stftResolutions.clear();
    for (const auto& r : m.at("stft_loss_resolutions")) {
      for (const auto& [key, value] : r.items()) {
        if (key != "fft" && key != "hop" && key != "window") {
          throw ValidationError("unknown config key 'vocoder.stft_loss_resolutions[]." + key + "'");
        }
      }
      c.stftResolutions.push_back(
          {r.at("fft").get<int>(), r.at("hop").get<int>(), r.at("window").get<int>()});
    }
    c.featureDim = m.at("feature_dim").get<int>();
    c.speakerDim = m.at("speaker_dim").get<int>();
    c.hiddenDim = m.at("hidden_dim").get<int>();
    c.iterEmbedDim = m.at("iter_embed_dim").get<int>();
    c.mpdChannels = m.at("mpd_channels").get<std::vector<int>>();
    c.mpdKernel = m.at("mpd_kernel").get<int>();
    c.mpdStride = m.at("mpd_stride").get<int>();
    c.seed = m.at("seed").get<uint64_t>();
    return c;
  });
}

TrainConfig trainConfigFromJson(const json& j, const TrainConfig& defaults) {
  const json m = merged(toJson(defaults), j, "train.");
  return parsing("train", [&] {
    TrainConfig c;
    c.steps = m.at("steps").get<int>();
    c.batchSize = m.at("batch_size").get<int>();
    c.lr = m.at("lr").get<double>();
    c.warmupSteps = m.at("warmup_steps").get<int>();
    c.clipNorm = m.at("clip_norm").get<double>();
    c.seed = m.at("seed").get<uint64_t>();
    c.checkpointEvery = m.at("checkpoint_every").get<int>();
    c.cropFrames = m.at("crop_frames").get<int>();
    c.stftWeight = m.at("stft_weight").get<double>();
    c.advWeight = m.at("adv_weight").get<double>();
    c.fmWeight = m.at("fm_weight").get<double>();
    c.advStartStep = m.at("adv_start_step").get<int>();
    c.advRampSteps = m.at("adv_ramp_steps").get<int>();
    c.discLr = m.at("disc_lr").get<double>();
    return c;
  });
}

RunConfig runConfigFromJson(const json& j) {
  const RunConfig defaults;
  const json m = merged(toJson(defaults), j, "");
  return parsing("run", [&] {
    RunConfig c;
    c.seed = m.at("seed").get<uint64_t>();
    c.workers = m.at("workers").get<int>();
    c.extractor = extractorSpecFromJson(m.at("extractor"));
    c.cleaner = cleanerConfigFromJson(m.at("cleaner"));
    c.vocoder = vocoderConfigFromJson(m.at("vocoder"));
    c.cleanerTrain = trainConfigFromJson(m.at("cleaner_train"), defaults.cleanerTrain);
    c.vocoderTrain = trainConfigFromJson(m.at("vocoder_train"), defaults.vocoderTrain);
    c.degrade.pattern = m.at("degrade").at("pattern").get<std::string>();
    c.degrade.codecBackend = m.at("degrade").at("codec_backend").get<std::string>();
    return c;
  });
}

void RunConfig::validate() const {
  if (workers < 1) {
    throw ValidationError("workers must be >= 1");
  }
  extractor.validate();
  cleaner.validate();
  vocoder.validate();
  cleanerTrain.validate();
  vocoderTrain.validate();
  checkCompatible(cleaner, vocoder, extractor);
  parsePattern(degrade.pattern);
  if (degrade.codecBackend != "surrogate" && degrade.codecBackend != "external") {
    throw ValidationError("unknown codec backend '" + degrade.codecBackend + "'");
  }
}

RunConfig loadRunConfig(const std::optional<std::filesystem::path>& path) {
  std::optional<std::filesystem::path> chosen = path;
  if (!chosen) {
    if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') {
      chosen = env;
    }
  }
  RunConfig config;
  if (chosen) {
    std::ifstream in(*chosen);
    if (!in) {
      throw IoError("cannot open config " + chosen->string());
    }
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError(chosen->string() + ": " + e.what());
    }
    config = runConfigFromJson(j);
  }
  config.validate();
  return config;
}

std::filesystem::path writeEffectiveConfig(
    const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / kEffectiveConfigName;
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << toJson(config).dump(2) << "\n";
  return path;
}

} // namespace revoice
