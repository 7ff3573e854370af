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

#include <gtest/gtest.h>

#include "oracles.h"
#include "revoice/cleaner.h"
#include "revoice/error.h"
#include "revoice/rng.h"

using namespace revoice;
using ag::Var;

namespace {

RowMatrix randn(long r, long c, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  RowMatrix m(r, c);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

struct Inputs {
  RowMatrix x, text, speaker;
};

Inputs randomInputs(const CleanerConfig& c, long frames, long tokens, uint64_t seed) {
  return {randn(frames, c.speechDim, seed), randn(tokens, c.textDim, seed + 1),
          randn(1, c.speakerDim, seed + 2)};
}

CleanerModel::Outputs run(const CleanerModel& m, const Inputs& in, int iterations = 0) {
  return m.forward(ag::constant(in.x), ag::constant(in.text), ag::constant(in.speaker), iterations);
}

} // namespace

TEST(FilmTest, MatchesDirectFormula) {
  nn::ParamSet params;
  Rng rng(1);
  const FilmParams f = FilmParams::create(params, "f", 5, 3, rng);
  for (auto& [name, v] : params.entries()) {
    Var p = v;
    p.mutableValue() = randn(v.rows(), v.cols(), std::hash<std::string>{}(name), 0.5);
  }
  const RowMatrix a = randn(7, 5, 2);
  const RowMatrix b = randn(1, 3, 3);
  const RowMatrix got = film(a, Eigen::RowVectorXd(b), f);
  const RowMatrix ref = oracle::film(
      a, b, f.conv1.w.value(), f.conv1.b.value(), f.conv2.w.value(), f.conv2.b.value());
  ASSERT_EQ(got.rows(), 7);
  ASSERT_EQ(got.cols(), 5);
  EXPECT_LT((got - ref).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(f.conv1.kernel, 3);
  EXPECT_EQ(f.conv2.kernel, 3);
  EXPECT_DOUBLE_EQ(f.lreluSlope, 0.1);
}

TEST(FilmTest, ZeroFinalMapAndLiveConditioning) {
  nn::ParamSet params;
  Rng rng(2);
  const FilmParams f = FilmParams::create(params, "f", 4, 6, rng);
  const RowMatrix a = randn(5, 4, 4);
  const Eigen::RowVectorXd zero = Eigen::RowVectorXd::Zero(6);
  const Eigen::RowVectorXd ones = Eigen::RowVectorXd::Ones(6);
  EXPECT_GT((film(a, zero, f) - film(a, ones, f)).cwiseAbs().maxCoeff(), 1e-6);

  Var w2 = f.conv2.w;
  Var b2 = f.conv2.b;
  w2.mutableValue().setZero();
  b2.mutableValue().setZero();
  EXPECT_EQ(film(a, ones, f).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(film(randn(5, 3, 1), ones, f), ValidationError);
  EXPECT_THROW(film(a, Eigen::RowVectorXd::Ones(2), f), ValidationError);
}

TEST(FilmTest, GradientMatchesFiniteDifferences) {
  nn::ParamSet params;
  Rng rng(3);
  const FilmParams f = FilmParams::create(params, "f", 4, 3, rng);
  Var a = ag::parameter(randn(6, 4, 5));
  Var b = ag::parameter(randn(1, 3, 6));
  std::vector<Var> all = {a, b};
  for (const auto& [name, v] : params.entries()) all.push_back(v);
  auto loss = [&] { return ag::sum(film(a, b, f)); };
  loss().backward();
  const auto check = oracle::finiteDifference(all, [&] { return loss().scalar(); });
  EXPECT_LT(check.relError, 1e-4);
}

TEST(CleanerTest, ConfigPresets) {
  const auto full = CleanerConfig::fullScale();
  EXPECT_EQ(full.numBlocks, 4);
  EXPECT_EQ(full.blockDim, 128);
  EXPECT_EQ(full.attnHidden, 512);
  EXPECT_EQ(full.numIterations, 2);
  EXPECT_EQ(full.postnetLayers, 5);
  EXPECT_EQ(blockDilation(0), 1);
  EXPECT_EQ(blockDilation(1), 2);
  EXPECT_EQ(blockDilation(2), 1);
  CleanerConfig bad;
  bad.numIterations = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(CleanerTest, ShapeContractAndErrors) {
  const CleanerModel m(CleanerConfig::tiny());
  const auto in = randomInputs(m.config(), 6, 3, 10);
  const auto out = run(m, in);
  ASSERT_EQ(out.postPostnet.size(), 2u);
  ASSERT_EQ(out.prePostnet.size(), 2u);
  EXPECT_EQ(out.postPostnet.back().rows(), 6);
  EXPECT_EQ(out.postPostnet.back().cols(), m.config().speechDim);
  EXPECT_THROW(m.forward(ag::constant(RowMatrix(0, 8)), ag::constant(in.text),
                         ag::constant(in.speaker)),
               ValidationError);
  EXPECT_THROW(m.forward(ag::constant(randn(4, 7, 1)), ag::constant(in.text),
                         ag::constant(in.speaker)),
               ValidationError);
}

TEST(CleanerTest, ParametersSharedAcrossIterations) {
  std::vector<size_t> counts;
  for (int n : {1, 2, 3}) {
    CleanerConfig c = CleanerConfig::deskScale();
    c.numIterations = n;
    counts.push_back(CleanerModel(c).params().scalarCount());
  }
  EXPECT_EQ(counts[0], counts[1]);
  EXPECT_EQ(counts[1], counts[2]);
}

TEST(CleanerTest, IterationIndexChangesOutput) {
  const CleanerModel m(CleanerConfig::tiny());
  const auto in = randomInputs(m.config(), 5, 3, 20);
  const RowMatrix s0 = m.step(in.x, in.text, in.speaker, 0);
  const RowMatrix s1 = m.step(in.x, in.text, in.speaker, 1);
  EXPECT_GT((s0 - s1).cwiseAbs().maxCoeff(), 1e-9);

  const auto out = run(m, in);
  EXPECT_LT((out.postPostnet[0].value() - s0).cwiseAbs().maxCoeff(), 1e-12);
  const RowMatrix chained = m.step(s0, in.text, in.speaker, 1);
  EXPECT_LT((out.postPostnet[1].value() - chained).cwiseAbs().maxCoeff(), 1e-12);

  const auto once = run(m, in, 1);
  EXPECT_GT((once.postPostnet.back().value() - out.postPostnet.back().value())
                .cwiseAbs().maxCoeff(), 1e-9);
}

TEST(CleanerTest, TextConditioningIsLive) {
  const CleanerModel m(CleanerConfig::tiny());
  auto in = randomInputs(m.config(), 5, 4, 30);
  const RowMatrix base = run(m, in).postPostnet.back().value();
  in.text.row(0).swap(in.text.row(3));
  EXPECT_GT((run(m, in).postPostnet.back().value() - base).cwiseAbs().maxCoeff(), 0.0);
}

TEST(CleanerTest, DeterministicInference) {
  const CleanerModel a(CleanerConfig::tiny());
  const CleanerModel b(CleanerConfig::tiny());
  const auto in = randomInputs(a.config(), 5, 3, 40);
  EXPECT_EQ(run(a, in).postPostnet.back().value(), run(b, in).postPostnet.back().value());
}

TEST(CleanerTest, GradientMatchesFiniteDifferences) {
  CleanerConfig c = CleanerConfig::tiny();
  c.seed = 5;
  const CleanerModel m(c);
  const auto in = randomInputs(c, 4, 3, 50);
  const RowMatrix target = randn(4, c.speechDim, 60);
  auto loss = [&] { return cleanerLoss(ag::constant(target), run(m, in), nullptr); };
  std::vector<Var> params;
  for (const auto& [name, v] : m.params().entries()) params.push_back(v);
  loss().backward();
  const auto check = oracle::finiteDifference(params, [&] { return loss().scalar(); });
  EXPECT_LT(check.relError, 1e-3);
  EXPECT_EQ(check.checked, m.params().scalarCount());
}

TEST(CleanerLossTest, IdentityExampleIsFive) {
  const RowMatrix s = RowMatrix::Identity(2, 2);
  const std::vector<CleanerPrediction> one = {{RowMatrix::Zero(2, 2), RowMatrix::Zero(2, 2)}};
  const auto r = cleanerLoss(s, one);
  // Two outputs (pre and post), each contributing l1 = 2, l2sq = 2, sc = 1.
  EXPECT_DOUBLE_EQ(r.l1, 4.0);
  EXPECT_DOUBLE_EQ(r.l2sq, 4.0);
  EXPECT_DOUBLE_EQ(r.sc, 2.0);
  EXPECT_DOUBLE_EQ(r.perIteration[0].prePostnet, 5.0);
  EXPECT_DOUBLE_EQ(r.perIteration[0].postPostnet, 5.0);
  EXPECT_DOUBLE_EQ(r.total, 10.0);
  EXPECT_DOUBLE_EQ(oracle::threeTermLoss(s, RowMatrix::Zero(2, 2)), 5.0);
}

TEST(CleanerLossTest, ZeroAtPerfectPredictionAndHomogeneity) {
  const RowMatrix s = randn(4, 3, 7);
  const RowMatrix p = randn(4, 3, 8);
  const std::vector<CleanerPrediction> perfect = {{s, s}, {s, s}};
  EXPECT_EQ(cleanerLoss(s, perfect).total, 0.0);

  const auto r1 = cleanerLoss(s, std::vector<CleanerPrediction>{{p, p}});
  const auto r2 = cleanerLoss(RowMatrix(2 * s), std::vector<CleanerPrediction>{{2 * p, 2 * p}});
  EXPECT_NEAR(r2.l1, 2 * r1.l1, 1e-10);
  EXPECT_NEAR(r2.l2sq, 4 * r1.l2sq, 1e-10);
  EXPECT_NEAR(r2.sc, r1.sc, 1e-12);
  EXPECT_NEAR(r1.perIteration[0].prePostnet, oracle::threeTermLoss(s, p), 1e-10);
  EXPECT_NEAR(r1.total, r1.l1 + r1.l2sq + r1.sc, 1e-10);
  EXPECT_THROW(cleanerLoss(RowMatrix::Zero(4, 3), perfect), ValidationError);
}

TEST(CleanerLossTest, DifferentiableFormAgrees) {
  const CleanerModel m(CleanerConfig::tiny());
  const auto in = randomInputs(m.config(), 5, 3, 70);
  const RowMatrix target = randn(5, m.config().speechDim, 71);
  const auto out = run(m, in);
  CleanerLossReport report;
  const double v = cleanerLoss(ag::constant(target), out, &report).scalar();
  std::vector<CleanerPrediction> preds;
  double ref = 0.0;
  for (size_t i = 0; i < out.prePostnet.size(); ++i) {
    preds.push_back({out.prePostnet[i].value(), out.postPostnet[i].value()});
    ref += oracle::threeTermLoss(target, out.prePostnet[i].value()) +
           oracle::threeTermLoss(target, out.postPostnet[i].value());
  }
  EXPECT_NEAR(v, ref, 1e-9 * ref);
  EXPECT_NEAR(report.total, cleanerLoss(target, preds).total, 1e-9 * ref);
  EXPECT_EQ(report.perIteration.size(), 2u);
}

TEST(CropTest, ContractAndUniformity) {
  SpeechFeatures s, x;
  s.values = randn(15, 4, 1);
  x.values = randn(15, 4, 2);
  EXPECT_EQ(cropTrainingFrames(s, x, 9).offset, 0);

  s.values = randn(100, 4, 3);
  x.values = randn(100, 4, 4);
  std::vector<double> counts(86, 0.0);
  for (uint64_t seed = 0; seed < 10000; ++seed) {
    const auto c = cropTrainingFrames(s, x, seed);
    ASSERT_GE(c.offset, 0);
    ASSERT_LE(c.offset, 85);
    counts[size_t(c.offset)] += 1;
    if (seed < 20) {
      ASSERT_EQ(c.clean.values, s.values.middleRows(c.offset, 15));
      ASSERT_EQ(c.degraded.values, x.values.middleRows(c.offset, 15));
    }
  }
  const std::vector<double> probs(86, 1.0 / 86);
  EXPECT_GT(oracle::chiSquarePValue(oracle::pearson(counts, probs), 85), 0.01);

  s.values = randn(10, 4, 5);
  x.values = randn(10, 4, 6);
  EXPECT_THROW(cropTrainingFrames(s, x, 0), ValidationError);
}
