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

// Minimal reverse-mode automatic differentiation over row-major float64
// matrices. Every value is 2-D; time runs along rows and channels along
// columns. Nodes whose inputs do not require gradients record no backward
// closure, so inference builds no graph.

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "revoice/audio.h"

namespace revoice::ag {

using Mat = RowMatrix;

struct Node {
  Mat value;
  Mat grad;
  bool requiresGrad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backwardFn;

  void accumulate(const Mat& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const {
    return node_ != nullptr;
  }
  const Mat& value() const {
    return node_->value;
  }
  /// Direct access for optimizers and checkpoint loading.
  Mat& mutableValue() {
    return node_->value;
  }
  /// Zero-sized until a backward pass reaches this node.
  const Mat& grad() const {
    return node_->grad;
  }
  Eigen::Index rows() const {
    return node_->value.rows();
  }
  Eigen::Index cols() const {
    return node_->value.cols();
  }
  double scalar() const;
  bool requiresGrad() const {
    return node_->requiresGrad;
  }
  const std::shared_ptr<Node>& node() const {
    return node_;
  }
  void zeroGrad() {
    node_->grad.resize(0, 0);
  }

  /// Backpropagates from this 1x1 value; gradients accumulate into leaves.
  void backward() const;

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Mat value);
Var parameter(Mat value);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var addScalar(const Var& a, double s);
/// a [R x C] + row [1 x C] broadcast over rows.
Var addRow(const Var& a, const Var& row);
Var matmul(const Var& a, const Var& b);
/// a [R x Cin] * w [Cin x Cout] + bias [1 x Cout].
Var linear(const Var& a, const Var& w, const Var& bias);
Var transpose(const Var& a);

Var tanh(const Var& a);
Var relu(const Var& a);
Var leakyRelu(const Var& a, double slope);
Var sigmoid(const Var& a);
Var silu(const Var& a);
Var abs(const Var& a);
Var square(const Var& a);
Var log(const Var& a);
Var clampMin(const Var& a, double lo);

Var softmaxRows(const Var& a);
/// Per-row normalization with affine [1 x C] gamma/beta.
Var layerNorm(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);

Var sum(const Var& a);
Var mean(const Var& a);
/// Sum of squares, returned as 1x1.
Var sumSquares(const Var& a);
Var sumAbs(const Var& a);
/// Frobenius norm, 1x1.
Var frobenius(const Var& a);
/// a / s where s is 1x1.
Var divScalar(const Var& a, const Var& s);

Var concatCols(std::span<const Var> parts);
Var concatRows(std::span<const Var> parts);
Var sliceCols(const Var& a, Eigen::Index start, Eigen::Index count);
Var sliceRows(const Var& a, Eigen::Index start, Eigen::Index count);
/// Row-major reshape.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
/// Zero rows before/after.
Var padRows(const Var& a, Eigen::Index before, Eigen::Index after);

struct ConvSpec {
  int batch = 1;
  int stride = 1;
  int dilation = 1;
  int padLeft = 0;
  int padRight = 0;

  /// Symmetric "same" padding for odd kernels at stride 1.
  static ConvSpec same(int kernel, int dilation = 1);
};

/// 1-D convolution along rows.
/// x: [L x batch*Cin], w: [kernel*Cin x Cout] with row index j*Cin + c,
/// bias: [1 x Cout] or undefined. Output: [L' x batch*Cout]; weights are
/// shared across the batch groups.
Var conv1d(const Var& x, const Var& w, const Var& bias, const ConvSpec& spec);

/// Per-channel convolution. x: [L x C], w: [kernel x C], bias [1 x C] or
/// undefined; "same" padding with the given dilation (odd kernel).
Var depthwiseConv1d(const Var& x, const Var& w, const Var& bias, int dilation);

/// Transposed convolution with one shared single-channel kernel applied to
/// every column. kernel: [k x 1], bias: [1 x 1]. Output rows
/// (L - 1) * stride + k - 2 * pad.
Var convTranspose1dShared(
    const Var& x, const Var& kernel, const Var& bias, int stride, int pad);

/// Magnitude STFT of a [T x 1] waveform: [frames x fftSize/2+1], with the
/// same framing as revoice::powerSpectrogram. Magnitudes are
/// sqrt(max(power, floor)).
Var stftMagnitude(
    const Var& wave, int fftSize, int hop, int window, double powerFloor = 1e-7);

/// lambda * y / max|y|.
Var gainNormalize(const Var& y, double lambda);

} // namespace revoice::ag
