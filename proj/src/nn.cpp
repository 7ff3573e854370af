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

#include "revoice/nn.h"

#include <algorithm>
#include <cmath>

#include "revoice/error.h"

namespace revoice::nn {

Var ParamSet::create(const std::string& name, Mat init) {
  if (contains(name)) {
    throw ValidationError("duplicate parameter name " + name);
  }
  Var v = ag::parameter(std::move(init));
  entries_.emplace_back(name, v);
  return v;
}

Var ParamSet::get(const std::string& name) const {
  for (const auto& [n, v] : entries_) {
    if (n == name) {
      return v;
    }
  }
  throw ValidationError("unknown parameter " + name);
}

bool ParamSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

size_t ParamSet::scalarCount() const {
  size_t n = 0;
  for (const auto& e : entries_) {
    n += static_cast<size_t>(e.second.value().size());
  }
  return n;
}

void ParamSet::zeroGrad() {
  for (auto& e : entries_) {
    e.second.zeroGrad();
  }
}

Mat randomNormal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = stddev * rng.normal();
  }
  return m;
}

Mat glorot(Eigen::Index rows, Eigen::Index cols, double fanIn, double fanOut, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fanIn + fanOut));
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.uniform(-limit, limit);
  }
  return m;
}

Linear Linear::create(
    ParamSet& params, const std::string& name, int in, int out, Rng& rng,
    bool withBias) {
  Linear l;
  l.w = params.create(name + ".w", glorot(in, out, in, out, rng));
  if (withBias) {
    l.b = params.create(name + ".b", Mat::Zero(1, out));
  }
  return l;
}

Conv1d Conv1d::create(
    ParamSet& params, const std::string& name, int in, int out, int kernel,
    Rng& rng) {
  Conv1d c;
  c.kernel = kernel;
  c.inChannels = in;
  c.outChannels = out;
  c.w = params.create(
      name + ".w",
      glorot(static_cast<Eigen::Index>(kernel) * in, out,
             static_cast<double>(kernel) * in, static_cast<double>(kernel) * out, rng));
  c.b = params.create(name + ".b", Mat::Zero(1, out));
  return c;
}

Var Conv1d::operator()(const Var& x, int dilation) const {
  return ag::conv1d(x, w, b, ag::ConvSpec::same(kernel, dilation));
}

LayerNorm LayerNorm::create(ParamSet& params, const std::string& name, int dim) {
  LayerNorm ln;
  ln.gamma = params.create(name + ".gamma", Mat::Ones(1, dim));
  ln.beta = params.create(name + ".beta", Mat::Zero(1, dim));
  return ln;
}

Adam::Adam(const ParamSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& [name, v] : params.entries()) {
    params_.push_back(v);
    m_.push_back(Mat::Zero(v.rows(), v.cols()));
    v_.push_back(Mat::Zero(v.rows(), v.cols()));
  }
}

double Adam::currentLr() const {
  if (cfg_.warmupSteps > 0 && step_ < cfg_.warmupSteps) {
    return cfg_.lr * static_cast<double>(step_ + 1) / cfg_.warmupSteps;
  }
  return cfg_.lr;
}

double Adam::step() {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (p.grad().size() != 0) {
      sq += p.grad().squaredNorm();
    }
  }
  const double norm = std::sqrt(sq);
  const double clip =
      (cfg_.clipNorm > 0.0 && norm > cfg_.clipNorm) ? cfg_.clipNorm / norm : 1.0;
  const double lr = currentLr();
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
  for (size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    if (p.grad().size() == 0) {
      continue;
    }
    const Mat g = p.grad() * clip;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
    p.mutableValue().array() -=
        lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
    p.zeroGrad();
  }
  return norm;
}

Mat sinusoidalEmbedding(double position, int dim) {
  Mat e(1, dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
    e(0, i) = std::sin(position * freq);
    e(0, half + i) = std::cos(position * freq);
  }
  if (dim % 2 == 1) {
    e(0, dim - 1) = 0.0;
  }
  return e;
}

} // namespace revoice::nn
