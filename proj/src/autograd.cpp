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

#include "revoice/autograd.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "fft_util.h"
#include "revoice/error.h"

namespace revoice::ag {

namespace {

std::string shapeOf(const Mat& m) {
  return "[" + std::to_string(m.rows()) + " x " + std::to_string(m.cols()) + "]";
}

void requireSameShape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(
        std::string(op) + ": shape mismatch " + shapeOf(a.value()) + " vs " +
        shapeOf(b.value()));
  }
}

Var makeVar(
    Mat value,
    std::vector<std::shared_ptr<Node>> parents,
    std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (p && p->requiresGrad) {
      node->requiresGrad = true;
      break;
    }
  }
  if (node->requiresGrad) {
    node->parents = std::move(parents);
    node->backwardFn = std::move(fn);
  }
  return Var(std::move(node));
}

inline bool needs(const std::shared_ptr<Node>& n) {
  return n && n->requiresGrad;
}

} // namespace

void Node::accumulate(const Mat& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

double Var::scalar() const {
  if (rows() != 1 || cols() != 1) {
    throw ValidationError("scalar() on non-1x1 value " + shapeOf(value()));
  }
  return value()(0, 0);
}

void Var::backward() const {
  if (rows() != 1 || cols() != 1) {
    throw ValidationError("backward() needs a 1x1 root");
  }
  if (!node_->requiresGrad) {
    return;
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p && p->requiresGrad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(Mat::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backwardFn && n->grad.size() != 0) {
      n->backwardFn(*n);
    }
  }
  // Interior gradients are no longer needed; leaves keep theirs.
  for (Node* n : order) {
    if (n->backwardFn) {
      n->grad.resize(0, 0);
    }
  }
}

Var constant(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requiresGrad = true;
  return Var(std::move(node));
}

// ------------------------------------------------------------ elementwise

Var add(const Var& a, const Var& b) {
  requireSameShape(a, b, "add");
  auto pa = a.node(), pb = b.node();
  return makeVar(a.value() + b.value(), {pa, pb}, [pa, pb](Node& self) {
    if (needs(pa)) pa->accumulate(self.grad);
    if (needs(pb)) pb->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  requireSameShape(a, b, "sub");
  auto pa = a.node(), pb = b.node();
  return makeVar(a.value() - b.value(), {pa, pb}, [pa, pb](Node& self) {
    if (needs(pa)) pa->accumulate(self.grad);
    if (needs(pb)) pb->accumulate(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  requireSameShape(a, b, "mul");
  auto pa = a.node(), pb = b.node();
  return makeVar(
      a.value().cwiseProduct(b.value()), {pa, pb}, [pa, pb](Node& self) {
        if (needs(pa)) pa->accumulate(self.grad.cwiseProduct(pb->value));
        if (needs(pb)) pb->accumulate(self.grad.cwiseProduct(pa->value));
      });
}

Var scale(const Var& a, double s) {
  auto pa = a.node();
  return makeVar(a.value() * s, {pa}, [pa, s](Node& self) {
    pa->accumulate(self.grad * s);
  });
}

Var addScalar(const Var& a, double s) {
  auto pa = a.node();
  return makeVar(
      (a.value().array() + s).matrix(), {pa},
      [pa](Node& self) { pa->accumulate(self.grad); });
}

Var addRow(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ValidationError(
        "addRow: expected [1 x " + std::to_string(a.cols()) + "] row, got " +
        shapeOf(row.value()));
  }
  auto pa = a.node(), pr = row.node();
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return makeVar(std::move(out), {pa, pr}, [pa, pr](Node& self) {
    if (needs(pa)) pa->accumulate(self.grad);
    if (needs(pr)) pr->accumulate(self.grad.colwise().sum());
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ValidationError(
        "matmul: inner dims differ " + shapeOf(a.value()) + " * " +
        shapeOf(b.value()));
  }
  auto pa = a.node(), pb = b.node();
  return makeVar(a.value() * b.value(), {pa, pb}, [pa, pb](Node& self) {
    if (needs(pa)) pa->accumulate(self.grad * pb->value.transpose());
    if (needs(pb)) pb->accumulate(pa->value.transpose() * self.grad);
  });
}

Var linear(const Var& a, const Var& w, const Var& bias) {
  Var out = matmul(a, w);
  return bias.defined() ? addRow(out, bias) : out;
}

Var transpose(const Var& a) {
  auto pa = a.node();
  return makeVar(a.value().transpose(), {pa}, [pa](Node& self) {
    pa->accumulate(self.grad.transpose());
  });
}

Var tanh(const Var& a) {
  auto pa = a.node();
  Mat y = a.value().array().tanh().matrix();
  return makeVar(y, {pa}, [pa, y](Node& self) {
    pa->accumulate(
        self.grad.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var relu(const Var& a) {
  return leakyRelu(a, 0.0);
}

Var leakyRelu(const Var& a, double slope) {
  auto pa = a.node();
  Mat y = a.value().unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
  return makeVar(std::move(y), {pa}, [pa, slope](Node& self) {
    Mat d = pa->value.unaryExpr([slope](double v) { return v > 0 ? 1.0 : slope; });
    pa->accumulate(self.grad.cwiseProduct(d));
  });
}

Var sigmoid(const Var& a) {
  auto pa = a.node();
  Mat y = a.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return makeVar(y, {pa}, [pa, y](Node& self) {
    pa->accumulate(
        self.grad.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var silu(const Var& a) {
  auto pa = a.node();
  Mat s = a.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Mat y = a.value().cwiseProduct(s);
  return makeVar(std::move(y), {pa}, [pa, s](Node& self) {
    const auto& x = pa->value.array();
    Mat d = (s.array() * (1.0 + x * (1.0 - s.array()))).matrix();
    pa->accumulate(self.grad.cwiseProduct(d));
  });
}

Var abs(const Var& a) {
  auto pa = a.node();
  return makeVar(a.value().cwiseAbs(), {pa}, [pa](Node& self) {
    Mat sgn = pa->value.unaryExpr(
        [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
    pa->accumulate(self.grad.cwiseProduct(sgn));
  });
}

Var square(const Var& a) {
  auto pa = a.node();
  return makeVar(a.value().cwiseAbs2(), {pa}, [pa](Node& self) {
    pa->accumulate(2.0 * self.grad.cwiseProduct(pa->value));
  });
}

Var log(const Var& a) {
  auto pa = a.node();
  return makeVar(a.value().array().log().matrix(), {pa}, [pa](Node& self) {
    pa->accumulate(self.grad.cwiseQuotient(pa->value));
  });
}

Var clampMin(const Var& a, double lo) {
  auto pa = a.node();
  return makeVar(a.value().cwiseMax(lo), {pa}, [pa, lo](Node& self) {
    Mat mask = pa->value.unaryExpr([lo](double v) { return v > lo ? 1.0 : 0.0; });
    pa->accumulate(self.grad.cwiseProduct(mask));
  });
}

// -------------------------------------------------------------- row-wise

Var softmaxRows(const Var& a) {
  auto pa = a.node();
  Mat y = a.value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return makeVar(y, {pa}, [pa, y](Node& self) {
    Mat dot = self.grad.cwiseProduct(y).rowwise().sum();
    Mat g = self.grad;
    g.colwise() -= dot.col(0);
    pa->accumulate(g.cwiseProduct(y));
  });
}

Var layerNorm(const Var& a, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index c = a.cols();
  if (gamma.rows() != 1 || gamma.cols() != c || beta.rows() != 1 ||
      beta.cols() != c) {
    throw ValidationError("layerNorm: gamma/beta must be [1 x C]");
  }
  auto pa = a.node(), pg = gamma.node(), pb = beta.node();
  const Mat& x = a.value();
  Mat xhat(x.rows(), c);
  Eigen::VectorXd invStd(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    invStd(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * invStd(r);
  }
  Mat y = xhat;
  y.array().rowwise() *= gamma.value().row(0).array();
  y.rowwise() += beta.value().row(0);
  return makeVar(
      std::move(y), {pa, pg, pb}, [pa, pg, pb, xhat, invStd](Node& self) {
        const Mat& g = self.grad;
        if (needs(pg)) pg->accumulate(g.cwiseProduct(xhat).colwise().sum());
        if (needs(pb)) pb->accumulate(g.colwise().sum());
        if (needs(pa)) {
          Mat gx = g;
          gx.array().rowwise() *= pg->value.row(0).array();
          const double n = static_cast<double>(gx.cols());
          Mat out(gx.rows(), gx.cols());
          for (Eigen::Index r = 0; r < gx.rows(); ++r) {
            const double m1 = gx.row(r).sum() / n;
            const double m2 = gx.row(r).dot(xhat.row(r)) / n;
            out.row(r) =
                (gx.row(r).array() - m1 - xhat.row(r).array() * m2) * invStd(r);
          }
          pa->accumulate(out);
        }
      });
}

// ------------------------------------------------------------ reductions

Var sum(const Var& a) {
  auto pa = a.node();
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return makeVar(std::move(v), {pa}, [pa](Node& self) {
    pa->accumulate(Mat::Constant(pa->value.rows(), pa->value.cols(), self.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var sumSquares(const Var& a) {
  auto pa = a.node();
  Mat v(1, 1);
  v(0, 0) = a.value().squaredNorm();
  return makeVar(std::move(v), {pa}, [pa](Node& self) {
    pa->accumulate(2.0 * self.grad(0, 0) * pa->value);
  });
}

Var sumAbs(const Var& a) {
  return sum(abs(a));
}

Var frobenius(const Var& a) {
  auto pa = a.node();
  Mat v(1, 1);
  const double n = a.value().norm();
  v(0, 0) = n;
  return makeVar(std::move(v), {pa}, [pa, n](Node& self) {
    if (n > 0.0) {
      pa->accumulate(self.grad(0, 0) / n * pa->value);
    }
  });
}

Var divScalar(const Var& a, const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw ValidationError("divScalar: divisor must be 1x1");
  }
  auto pa = a.node(), ps = s.node();
  const double d = s.scalar();
  return makeVar(a.value() / d, {pa, ps}, [pa, ps, d](Node& self) {
    if (needs(pa)) pa->accumulate(self.grad / d);
    if (needs(ps)) {
      Mat g(1, 1);
      g(0, 0) = -self.grad.cwiseProduct(pa->value).sum() / (d * d);
      ps->accumulate(g);
    }
  });
}

// ------------------------------------------------------------- structure

Var concatCols(std::span<const Var> parts) {
  if (parts.empty()) {
    throw ValidationError("concatCols: no inputs");
  }
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ValidationError("concatCols: row counts differ");
    }
    cols += p.cols();
    nodes.push_back(p.node());
    widths.push_back(p.cols());
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  auto captured = nodes;
  return makeVar(std::move(out), std::move(nodes), [captured, widths](Node& self) {
    Eigen::Index at = 0;
    for (size_t i = 0; i < captured.size(); ++i) {
      if (needs(captured[i])) {
        captured[i]->accumulate(self.grad.middleCols(at, widths[i]));
      }
      at += widths[i];
    }
  });
}

Var concatRows(std::span<const Var> parts) {
  if (parts.empty()) {
    throw ValidationError("concatRows: no inputs");
  }
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<Eigen::Index> heights;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw ValidationError("concatRows: column counts differ");
    }
    rows += p.rows();
    nodes.push_back(p.node());
    heights.push_back(p.rows());
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  auto captured = nodes;
  return makeVar(std::move(out), std::move(nodes), [captured, heights](Node& self) {
    Eigen::Index at = 0;
    for (size_t i = 0; i < captured.size(); ++i) {
      if (needs(captured[i])) {
        captured[i]->accumulate(self.grad.middleRows(at, heights[i]));
      }
      at += heights[i];
    }
  });
}

Var sliceCols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ValidationError("sliceCols out of range");
  }
  auto pa = a.node();
  return makeVar(a.value().middleCols(start, count), {pa}, [pa, start, count](Node& self) {
    Mat g = Mat::Zero(pa->value.rows(), pa->value.cols());
    g.middleCols(start, count) = self.grad;
    pa->accumulate(g);
  });
}

Var sliceRows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ValidationError("sliceRows out of range");
  }
  auto pa = a.node();
  return makeVar(a.value().middleRows(start, count), {pa}, [pa, start, count](Node& self) {
    Mat g = Mat::Zero(pa->value.rows(), pa->value.cols());
    g.middleRows(start, count) = self.grad;
    pa->accumulate(g);
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) {
    throw ValidationError(
        "reshape: cannot view " + shapeOf(a.value()) + " as [" +
        std::to_string(rows) + " x " + std::to_string(cols) + "]");
  }
  auto pa = a.node();
  Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  return makeVar(std::move(out), {pa}, [pa](Node& self) {
    pa->accumulate(Eigen::Map<const Mat>(
        self.grad.data(), pa->value.rows(), pa->value.cols()));
  });
}

Var padRows(const Var& a, Eigen::Index before, Eigen::Index after) {
  auto pa = a.node();
  Mat out = Mat::Zero(a.rows() + before + after, a.cols());
  out.middleRows(before, a.rows()) = a.value();
  return makeVar(std::move(out), {pa}, [pa, before](Node& self) {
    pa->accumulate(self.grad.middleRows(before, pa->value.rows()));
  });
}

// ----------------------------------------------------------- convolution

ConvSpec ConvSpec::same(int kernel, int dilation) {
  ConvSpec s;
  s.dilation = dilation;
  s.padLeft = dilation * (kernel - 1) / 2;
  s.padRight = dilation * (kernel - 1) - s.padLeft;
  return s;
}

Var conv1d(const Var& x, const Var& w, const Var& bias, const ConvSpec& spec) {
  const int batch = spec.batch;
  if (batch <= 0 || spec.stride <= 0 || spec.dilation <= 0) {
    throw ValidationError("conv1d: batch, stride and dilation must be positive");
  }
  if (x.cols() % batch != 0) {
    throw ValidationError("conv1d: input columns not divisible by batch");
  }
  const Eigen::Index cin = x.cols() / batch;
  if (w.rows() % cin != 0) {
    throw ValidationError(
        "conv1d: weight " + shapeOf(w.value()) + " does not match " +
        std::to_string(cin) + " input channels");
  }
  const Eigen::Index kernel = w.rows() / cin;
  const Eigen::Index cout = w.cols();
  if (bias.defined() && (bias.rows() != 1 || bias.cols() != cout)) {
    throw ValidationError("conv1d: bias must be [1 x Cout]");
  }
  const Eigen::Index len = x.rows();
  const Eigen::Index padded = len + spec.padLeft + spec.padRight;
  const Eigen::Index span = spec.dilation * (kernel - 1) + 1;
  if (padded < span) {
    throw ValidationError("conv1d: input shorter than the kernel span");
  }
  const Eigen::Index outLen = (padded - span) / spec.stride + 1;

  const Mat& xv = x.value();
  std::vector<Mat> cols(batch);
  Mat out(outLen, batch * cout);
  for (int b = 0; b < batch; ++b) {
    Mat& col = cols[b];
    col = Mat::Zero(outLen, kernel * cin);
    for (Eigen::Index t = 0; t < outLen; ++t) {
      for (Eigen::Index j = 0; j < kernel; ++j) {
        const Eigen::Index src = t * spec.stride + j * spec.dilation - spec.padLeft;
        if (src >= 0 && src < len) {
          col.block(t, j * cin, 1, cin) = xv.block(src, b * cin, 1, cin);
        }
      }
    }
    out.middleCols(b * cout, cout).noalias() = col * w.value();
    if (bias.defined()) {
      out.middleCols(b * cout, cout).rowwise() += bias.value().row(0);
    }
  }
  auto px = x.node(), pw = w.node(), pb = bias.node();
  return makeVar(
      std::move(out), {px, pw, pb},
      [px, pw, pb, cols = std::move(cols), spec, cin, cout, kernel, len](Node& self) {
        const int batch = spec.batch;
        Mat gx;
        if (needs(px)) gx = Mat::Zero(len, batch * cin);
        Mat gw;
        if (needs(pw)) gw = Mat::Zero(pw->value.rows(), pw->value.cols());
        Mat gb;
        if (needs(pb)) gb = Mat::Zero(1, cout);
        for (int b = 0; b < batch; ++b) {
          const auto g = self.grad.middleCols(b * cout, cout);
          if (needs(pw)) gw.noalias() += cols[b].transpose() * g;
          if (needs(pb)) gb += g.colwise().sum();
          if (needs(px)) {
            const Mat gcol = g * pw->value.transpose();
            for (Eigen::Index t = 0; t < gcol.rows(); ++t) {
              for (Eigen::Index j = 0; j < kernel; ++j) {
                const Eigen::Index src =
                    t * spec.stride + j * spec.dilation - spec.padLeft;
                if (src >= 0 && src < len) {
                  gx.block(src, b * cin, 1, cin) += gcol.block(t, j * cin, 1, cin);
                }
              }
            }
          }
        }
        if (needs(px)) px->accumulate(gx);
        if (needs(pw)) pw->accumulate(gw);
        if (needs(pb)) pb->accumulate(gb);
      });
}

Var depthwiseConv1d(const Var& x, const Var& w, const Var& bias, int dilation) {
  const Eigen::Index c = x.cols();
  const Eigen::Index kernel = w.rows();
  if (w.cols() != c || kernel % 2 == 0) {
    throw ValidationError("depthwiseConv1d: weight must be [odd kernel x C]");
  }
  if (bias.defined() && (bias.rows() != 1 || bias.cols() != c)) {
    throw ValidationError("depthwiseConv1d: bias must be [1 x C]");
  }
  const Eigen::Index len = x.rows();
  const Eigen::Index half = (kernel - 1) / 2;
  const Mat& xv = x.value();
  const Mat& wv = w.value();
  Mat out = Mat::Zero(len, c);
  for (Eigen::Index t = 0; t < len; ++t) {
    for (Eigen::Index j = 0; j < kernel; ++j) {
      const Eigen::Index src = t + (j - half) * dilation;
      if (src >= 0 && src < len) {
        out.row(t).array() += xv.row(src).array() * wv.row(j).array();
      }
    }
  }
  if (bias.defined()) {
    out.rowwise() += bias.value().row(0);
  }
  auto px = x.node(), pw = w.node(), pb = bias.node();
  return makeVar(
      std::move(out), {px, pw, pb},
      [px, pw, pb, dilation, half, kernel, len](Node& self) {
        const Mat& g = self.grad;
        Mat gx;
        if (needs(px)) gx = Mat::Zero(len, g.cols());
        Mat gw;
        if (needs(pw)) gw = Mat::Zero(kernel, g.cols());
        for (Eigen::Index t = 0; t < len; ++t) {
          for (Eigen::Index j = 0; j < kernel; ++j) {
            const Eigen::Index src = t + (j - half) * dilation;
            if (src < 0 || src >= len) continue;
            if (needs(px)) gx.row(src).array() += g.row(t).array() * pw->value.row(j).array();
            if (needs(pw)) gw.row(j).array() += g.row(t).array() * px->value.row(src).array();
          }
        }
        if (needs(px)) px->accumulate(gx);
        if (needs(pw)) pw->accumulate(gw);
        if (needs(pb)) pb->accumulate(g.colwise().sum());
      });
}

Var convTranspose1dShared(
    const Var& x, const Var& kernel, const Var& bias, int stride, int pad) {
  if (kernel.cols() != 1 || bias.rows() != 1 || bias.cols() != 1) {
    throw ValidationError("convTranspose1dShared: kernel [k x 1], bias [1 x 1]");
  }
  const Eigen::Index len = x.rows();
  const Eigen::Index k = kernel.rows();
  const Eigen::Index outLen = (len - 1) * stride + k - 2 * pad;
  if (outLen <= 0) {
    throw ValidationError("convTranspose1dShared: empty output");
  }
  const Mat& xv = x.value();
  const Mat& kv = kernel.value();
  Mat out = Mat::Constant(outLen, x.cols(), bias.value()(0, 0));
  for (Eigen::Index t = 0; t < len; ++t) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index dst = t * stride + j - pad;
      if (dst >= 0 && dst < outLen) {
        out.row(dst) += kv(j, 0) * xv.row(t);
      }
    }
  }
  auto px = x.node(), pk = kernel.node(), pb = bias.node();
  return makeVar(
      std::move(out), {px, pk, pb}, [px, pk, pb, stride, pad, len, k, outLen](Node& self) {
        const Mat& g = self.grad;
        Mat gx;
        if (needs(px)) gx = Mat::Zero(len, g.cols());
        Mat gk;
        if (needs(pk)) gk = Mat::Zero(k, 1);
        for (Eigen::Index t = 0; t < len; ++t) {
          for (Eigen::Index j = 0; j < k; ++j) {
            const Eigen::Index dst = t * stride + j - pad;
            if (dst < 0 || dst >= outLen) continue;
            if (needs(px)) gx.row(t) += pk->value(j, 0) * g.row(dst);
            if (needs(pk)) gk(j, 0) += g.row(dst).dot(px->value.row(t));
          }
        }
        if (needs(px)) px->accumulate(gx);
        if (needs(pk)) pk->accumulate(gk);
        if (needs(pb)) {
          Mat gb(1, 1);
          gb(0, 0) = g.sum();
          pb->accumulate(gb);
        }
      });
}

// ------------------------------------------------------------------ audio

Var stftMagnitude(
    const Var& wave, int fftSize, int hop, int window, double powerFloor) {
  if (wave.cols() != 1) {
    throw ValidationError("stftMagnitude expects a [T x 1] waveform");
  }
  if (fftSize <= 0 || (fftSize & (fftSize - 1)) != 0 || window > fftSize ||
      hop <= 0) {
    throw ValidationError("stftMagnitude: invalid fft/hop/window");
  }
  const Eigen::Index total = wave.rows();
  const Eigen::Index frames = stftFrameCount(total, hop);
  const int bins = fftSize / 2 + 1;
  const auto win = detail::paddedHann(window, fftSize);
  detail::RealFft fft(fftSize);

  Mat mag(frames, bins);
  // Spectra are kept for the backward pass.
  auto spectra = std::make_shared<std::vector<std::vector<detail::Complex>>>(frames);
  std::vector<double> buf(fftSize);
  const Mat& x = wave.value();
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Eigen::Index start = f * hop - fftSize / 2;
    for (int n = 0; n < fftSize; ++n) {
      const Eigen::Index i = start + n;
      buf[n] = (i >= 0 && i < total) ? x(i, 0) * win[n] : 0.0;
    }
    auto& spec = (*spectra)[f];
    fft.forward(buf, spec);
    for (int k = 0; k < bins; ++k) {
      mag(f, k) = std::sqrt(std::max(std::norm(spec[k]), powerFloor));
    }
  }
  auto pw = wave.node();
  return makeVar(
      mag, {pw},
      [pw, spectra, mag, win, fftSize, hop, bins, total, powerFloor](Node& self) {
        Eigen::FFT<double> cfft;
        std::vector<detail::Complex> z(fftSize);
        std::vector<detail::Complex> time;
        Mat gx = Mat::Zero(total, 1);
        const Mat& g = self.grad;
        for (Eigen::Index f = 0; f < g.rows(); ++f) {
          const auto& spec = (*spectra)[f];
          std::fill(z.begin(), z.end(), detail::Complex(0.0, 0.0));
          bool any = false;
          for (int k = 0; k < bins; ++k) {
            if (std::norm(spec[k]) <= powerFloor || g(f, k) == 0.0) continue;
            // d|X|/dRe = Re/|X|, d|X|/dIm = Im/|X|.
            const double s = g(f, k) / mag(f, k);
            z[k] = detail::Complex(s * spec[k].real(), s * spec[k].imag());
            any = true;
          }
          if (!any) continue;
          // Re(X_k) = sum_n b[n] cos, Im(X_k) = -sum_n b[n] sin, so
          // dL/db[n] = Re(sum_k z_k e^{+i 2 pi k n / N}).
          detail::complexInverseUnscaled(cfft, z, time);
          const Eigen::Index start = f * hop - fftSize / 2;
          for (int n = 0; n < fftSize; ++n) {
            const Eigen::Index i = start + n;
            if (i >= 0 && i < total) {
              gx(i, 0) += time[n].real() * win[n];
            }
          }
        }
        pw->accumulate(gx);
      });
}

Var gainNormalize(const Var& y, double lambda) {
  const Mat& v = y.value();
  Eigen::Index r = 0, c = 0;
  const double m = v.cwiseAbs().maxCoeff(&r, &c);
  if (!(m > 0.0)) {
    throw ValidationError("gainNormalize: input is all zeros");
  }
  const double sign = v(r, c) >= 0 ? 1.0 : -1.0;
  auto py = y.node();
  return makeVar(v * (lambda / m), {py}, [py, lambda, m, r, c, sign](Node& self) {
    Mat g = self.grad * (lambda / m);
    const double dot = self.grad.cwiseProduct(py->value).sum();
    g(r, c) -= lambda / (m * m) * dot * sign;
    py->accumulate(g);
  });
}

} // namespace revoice::ag
