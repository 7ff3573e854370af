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

// Parameter containers, small layers and the Adam optimizer.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "revoice/autograd.h"
#include "revoice/rng.h"

namespace revoice::nn {

using ag::Mat;
using ag::Var;

/// Ordered, named parameter registry. Names are unique.
class ParamSet {
 public:
  Var create(const std::string& name, Mat init);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Var>>& entries() const {
    return entries_;
  }
  /// Total number of scalar parameters.
  size_t scalarCount() const;
  void zeroGrad();

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

Mat randomNormal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
/// Glorot-uniform initialization.
Mat glorot(Eigen::Index rows, Eigen::Index cols, double fanIn, double fanOut, Rng& rng);

struct Linear {
  Var w;
  Var b;

  static Linear create(
      ParamSet& params, const std::string& name, int in, int out, Rng& rng,
      bool withBias = true);
  Var operator()(const Var& x) const {
    return ag::linear(x, w, b);
  }
};

struct Conv1d {
  Var w;
  Var b;
  int kernel = 1;
  int inChannels = 1;
  int outChannels = 1;

  static Conv1d create(
      ParamSet& params, const std::string& name, int in, int out, int kernel,
      Rng& rng);
  /// "same"-padded stride-1 convolution.
  Var operator()(const Var& x, int dilation = 1) const;
};

struct LayerNorm {
  Var gamma;
  Var beta;

  static LayerNorm create(ParamSet& params, const std::string& name, int dim);
  Var operator()(const Var& x) const {
    return ag::layerNorm(x, gamma, beta);
  }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int warmupSteps = 0;
  /// Global gradient-norm clip; <= 0 disables.
  double clipNorm = 0.0;
};

class Adam {
 public:
  Adam(const ParamSet& params, AdamConfig cfg);

  /// Applies one update from the accumulated gradients, then clears them.
  /// Returns the pre-clip global gradient norm.
  double step();
  /// Linear warmup to cfg.lr over warmupSteps.
  double currentLr() const;
  int steps() const {
    return step_;
  }

 private:
  std::vector<Var> params_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  AdamConfig cfg_;
  int step_ = 0;
};

/// Sinusoidal positional embedding of an integer position, [1 x dim].
Mat sinusoidalEmbedding(double position, int dim);

} // namespace revoice::nn
