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
#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "revoice/cli.h"
#include "revoice/degrade.h"
#include "revoice/error.h"
#include "revoice/features.h"
#include "revoice/train_eval.h"
#include "revoice/vocoder.h"

namespace py = pybind11;
using namespace revoice;

namespace {

py::array_t<double> toArray(const std::vector<double>& v) {
  py::array_t<double> a(py::ssize_t(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

AudioClip toClip(const std::vector<double>& samples, int sampleRate) {
  AudioClip c;
  c.samples = samples;
  c.sampleRate = sampleRate;
  return c;
}

std::vector<double> speakerEmbedding(const std::vector<double>& samples, int sampleRate) {
  const auto e = extractSpeakerEmbedding(toClip(samples, sampleRate), ExtractorSpec{});
  return {e.values.data(), e.values.data() + e.values.size()};
}

} // namespace

PYBIND11_MODULE(_revoice, m) {
  m.doc() = "Speech restoration toolkit: degradation, features, models and evaluation.";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<BackendError>(m, "BackendError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());

  m.def("load_wav", [](const std::filesystem::path& path) {
    const AudioClip c = loadWav(path);
    return py::make_tuple(toArray(c.samples), c.sampleRate);
  }, py::arg("path"));
  m.def("save_wav", [](const std::filesystem::path& path, const std::vector<double>& samples,
                       int sampleRate) { saveWav(toClip(samples, sampleRate), path); },
        py::arg("path"), py::arg("samples"), py::arg("sample_rate") = kRate24k);

  m.def("codec_probability", [](const std::string& name) {
    return codecProbability(parseCodec(name));
  }, py::arg("codec"));
  m.def("allowed_bitrates", [](const std::string& name) {
    const auto r = allowedBitrates(parseCodec(name));
    return std::vector<double>(r.begin(), r.end());
  }, py::arg("codec"));
  m.def("sample_recipe", [](uint64_t seed, const std::string& pattern) {
    return recipeToJson(sampleRecipe(seed, parsePattern(pattern)));
  }, py::arg("seed"), py::arg("pattern") = "reverb+codec",
     "Recipe as a JSON string.");
  m.def("mix_at_snr", [](const std::vector<double>& speech, const std::vector<double>& noise,
                         double snrDb, uint64_t seed, int sampleRate) {
    return toArray(mixAtSnr(toClip(speech, sampleRate), toClip(noise, sampleRate), snrDb, seed).samples);
  }, py::arg("speech"), py::arg("noise"), py::arg("snr_db"), py::arg("seed") = 0,
     py::arg("sample_rate") = kRate24k);

  m.def("gain_normalize", [](const std::vector<double>& y, double lambda) {
    return toArray(gainNormalize(y, lambda));
  }, py::arg("y"), py::arg("lam") = 0.9);

  m.def("speaker_embedding", [](const std::vector<double>& samples, int sampleRate) {
    return toArray(speakerEmbedding(samples, sampleRate));
  }, py::arg("samples"), py::arg("sample_rate") = kRate24k,
     "Surrogate speaker embedding with the default extractor spec.");
  m.def("word_error_rate", &wordErrorRate, py::arg("reference"), py::arg("hypothesis"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = cli::run(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs a CLI invocation; returns (exit_code, stdout, stderr).");
}
