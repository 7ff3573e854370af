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
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "revoice/degrade.h"
#include "revoice/error.h"
#include "revoice/rng.h"

namespace revoice {

using nlohmann::json;

namespace {

constexpr std::array<double, 4> kMp3Rates = {16e3, 32e3, 64e3, 128e3};
constexpr std::array<double, 3> kVorbisRates = {32e3, 48e3, 64e3};
constexpr std::array<double, 1> kALawRates = {64e3};
constexpr std::array<double, 9> kAmrWbRates = {
    6.6e3, 8.85e3, 12.65e3, 14.25e3, 15.85e3, 18.25e3, 19.85e3, 23.05e3, 23.85e3};
constexpr std::array<double, 5> kOpusRates = {8e3, 16e3, 32e3, 64e3, 128e3};

// Sub-streams of a recipe seed.
enum Stream : uint64_t {
  kStreamSnr = 0,
  kStreamRoom = 1,
  kStreamCodec = 2,
  kStreamNoise = 3,
};

bool inRange(double v, double lo, double hi) {
  return v >= lo && v <= hi;
}

void checkInside(const Vec3& p, const RoomSpec& r, const char* what) {
  const bool ok = p.x >= kWallMargin && p.x <= r.widthX - kWallMargin &&
      p.y >= kWallMargin && p.y <= r.widthY - kWallMargin &&
      p.z >= kWallMargin && p.z <= r.heightZ - kWallMargin;
  if (!ok) {
    throw ValidationError(
        std::string(what) + " position must be at least 0.3 m inside every wall");
  }
}

json vecToJson(const Vec3& v) {
  return json::array({v.x, v.y, v.z});
}

Vec3 vecFromJson(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw FormatError("position must be a 3-element array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

} // namespace

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void RoomSpec::validate() const {
  if (!inRange(widthX, 2.0, 10.0) || !inRange(widthY, 2.0, 10.0)) {
    throw ValidationError("room widths must lie in [2, 10] m");
  }
  if (!inRange(heightZ, 2.0, 5.0)) {
    throw ValidationError("room height must lie in [2, 5] m");
  }
  if (!inRange(rt60, 0.2, 0.5)) {
    throw ValidationError("rt60 must lie in [0.2, 0.5] s");
  }
  checkInside(source, *this, "source");
  checkInside(mic, *this, "microphone");
}

std::string codecName(Codec codec) {
  switch (codec) {
    case Codec::kMp3: return "MP3";
    case Codec::kVorbis: return "Vorbis";
    case Codec::kALaw: return "A-law";
    case Codec::kAmrWb: return "AMR-WB";
    case Codec::kOpus: return "OPUS";
  }
  return "?";
}

Codec parseCodec(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  if (n == "mp3") return Codec::kMp3;
  if (n == "vorbis") return Codec::kVorbis;
  if (n == "a-law" || n == "alaw") return Codec::kALaw;
  if (n == "amr-wb" || n == "amrwb") return Codec::kAmrWb;
  if (n == "opus") return Codec::kOpus;
  throw ValidationError("unknown codec '" + name + "'");
}

double codecProbability(Codec codec) {
  switch (codec) {
    case Codec::kMp3: return 0.5;
    case Codec::kVorbis: return 0.075;
    case Codec::kALaw: return 0.025;
    case Codec::kAmrWb: return 0.025;
    case Codec::kOpus: return 0.375;
  }
  return 0.0;
}

std::span<const double> allowedBitrates(Codec codec) {
  switch (codec) {
    case Codec::kMp3: return kMp3Rates;
    case Codec::kVorbis: return kVorbisRates;
    case Codec::kALaw: return kALawRates;
    case Codec::kAmrWb: return kAmrWbRates;
    case Codec::kOpus: return kOpusRates;
  }
  return {};
}

void CodecSpec::validate() const {
  const auto rates = allowedBitrates(codec);
  const bool ok = std::any_of(rates.begin(), rates.end(), [&](double r) {
    return std::abs(r - bitrate) < 1e-6;
  });
  if (!ok) {
    throw ValidationError(
        "bitrate " + std::to_string(bitrate) + " is not allowed for " +
        codecName(codec));
  }
}

DegradationPattern parsePattern(const std::string& name) {
  std::string n = name;
  if (!n.empty() && n.front() == '+') {
    n.erase(0, 1);
  }
  if (n == "clean+noise" || n == "noise") return DegradationPattern::kNoise;
  if (n == "reverb") return DegradationPattern::kReverb;
  if (n == "codec") return DegradationPattern::kCodec;
  if (n == "reverb+codec") return DegradationPattern::kReverbCodec;
  throw ValidationError("unknown degradation pattern '" + name + "'");
}

std::string patternName(DegradationPattern pattern) {
  switch (pattern) {
    case DegradationPattern::kNoise: return "clean+noise";
    case DegradationPattern::kReverb: return "reverb";
    case DegradationPattern::kCodec: return "codec";
    case DegradationPattern::kReverbCodec: return "reverb+codec";
  }
  return "?";
}

void DegradationRecipe::validate() const {
  if (!(snrDb >= kMinSnrDb && snrDb <= kMaxSnrDb)) {
    throw ValidationError("snr_db must lie in [5, 30]");
  }
  if (room) {
    room->validate();
  }
  if (codec) {
    codec->validate();
  }
}

RoomSpec sampleRoom(uint64_t seed) {
  Rng rng(seed);
  RoomSpec r;
  r.rt60 = rng.uniform(0.2, 0.5);
  r.widthX = rng.uniform(2.0, 10.0);
  r.widthY = rng.uniform(2.0, 10.0);
  r.heightZ = rng.uniform(2.0, 5.0);
  auto draw = [&] {
    return Vec3{
        rng.uniform(kWallMargin, r.widthX - kWallMargin),
        rng.uniform(kWallMargin, r.widthY - kWallMargin),
        rng.uniform(kWallMargin, r.heightZ - kWallMargin)};
  };
  r.source = draw();
  do {
    r.mic = draw();
  } while (distance(r.source, r.mic) < kMinSourceMicDistance);
  return r;
}

CodecSpec sampleCodec(uint64_t seed) {
  Rng rng(seed);
  const double u = rng.uniform();
  double acc = 0.0;
  Codec chosen = kAllCodecs.back();
  for (Codec c : kAllCodecs) {
    acc += codecProbability(c);
    if (u < acc) {
      chosen = c;
      break;
    }
  }
  const auto rates = allowedBitrates(chosen);
  const auto idx = rng.uniformInt(0, static_cast<int64_t>(rates.size()) - 1);
  return {chosen, rates[idx]};
}

DegradationRecipe sampleRecipe(
    uint64_t seed, DegradationPattern pattern, std::span<const std::string> noiseIds) {
  DegradationRecipe r;
  r.rngSeed = seed;
  Rng snrRng(deriveSeed(seed, kStreamSnr));
  r.snrDb = snrRng.uniform(kMinSnrDb, kMaxSnrDb);
  if (pattern == DegradationPattern::kReverb ||
      pattern == DegradationPattern::kReverbCodec) {
    r.room = sampleRoom(deriveSeed(seed, kStreamRoom));
  }
  if (pattern == DegradationPattern::kCodec ||
      pattern == DegradationPattern::kReverbCodec) {
    r.codec = sampleCodec(deriveSeed(seed, kStreamCodec));
  }
  if (!noiseIds.empty()) {
    Rng noiseRng(deriveSeed(seed, kStreamNoise));
    r.noiseId = noiseIds[noiseRng.uniformInt(0, static_cast<int64_t>(noiseIds.size()) - 1)];
  }
  return r;
}

std::string recipeToJson(const DegradationRecipe& recipe) {
  json j;
  j["utt_id"] = recipe.uttId;
  j["noise_id"] = recipe.noiseId;
  j["snr_db"] = recipe.snrDb;
  if (recipe.room) {
    const auto& r = *recipe.room;
    j["room"] = {
        {"width_x", r.widthX}, {"width_y", r.widthY}, {"height_z", r.heightZ},
        {"rt60", r.rt60}, {"source_pos", vecToJson(r.source)},
        {"mic_pos", vecToJson(r.mic)}};
  } else {
    j["room"] = nullptr;
  }
  if (recipe.codec) {
    j["codec"] = {
        {"codec", codecName(recipe.codec->codec)},
        {"bitrate", recipe.codec->bitrate}};
  } else {
    j["codec"] = nullptr;
  }
  j["rng_seed"] = recipe.rngSeed;
  j["codec_backend"] = recipe.codecBackend;
  return j.dump();
}

DegradationRecipe recipeFromJson(const std::string& text) {
  DegradationRecipe r;
  try {
    const json j = json::parse(text);
    r.uttId = j.at("utt_id").get<std::string>();
    r.noiseId = j.at("noise_id").get<std::string>();
    r.snrDb = j.at("snr_db").get<double>();
    if (j.contains("room") && !j["room"].is_null()) {
      const auto& jr = j["room"];
      RoomSpec room;
      room.widthX = jr.at("width_x").get<double>();
      room.widthY = jr.at("width_y").get<double>();
      room.heightZ = jr.at("height_z").get<double>();
      room.rt60 = jr.at("rt60").get<double>();
      room.source = vecFromJson(jr.at("source_pos"));
      room.mic = vecFromJson(jr.at("mic_pos"));
      r.room = room;
    }
    if (j.contains("codec") && !j["codec"].is_null()) {
      const auto& jc = j["codec"];
      r.codec = CodecSpec{
          parseCodec(jc.at("codec").get<std::string>()),
          jc.at("bitrate").get<double>()};
    }
    r.rngSeed = j.at("rng_seed").get<uint64_t>();
    r.codecBackend = j.value("codec_backend", std::string("surrogate"));
  } catch (const json::exception& ex) {
    throw FormatError(std::string("bad recipe record: ") + ex.what());
  }
  return r;
}

std::vector<DegradationRecipe> readRecipes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open recipe file " + path.string());
  }
  std::vector<DegradationRecipe> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      out.push_back(recipeFromJson(line));
    }
  }
  return out;
}

void writeRecipes(
    std::span<const DegradationRecipe> recipes, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write recipe file " + path.string());
  }
  for (const auto& r : recipes) {
    out << recipeToJson(r) << '\n';
  }
}

} // namespace revoice
