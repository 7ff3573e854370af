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

// Internal FFT helpers over Eigen's kissfft backend.

#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace revoice::detail {

using Complex = std::complex<double>;

/// Periodic Hann window of `window` samples, zero-padded and centered to
/// `fftSize` samples.
inline std::vector<double> paddedHann(int window, int fftSize) {
  std::vector<double> w(fftSize, 0.0);
  const int offset = (fftSize - window) / 2;
  for (int n = 0; n < window; ++n) {
    w[offset + n] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / window);
  }
  return w;
}

/// Reusable real FFT of one fixed size.
class RealFft {
 public:
  explicit RealFft(int size) : size_(size) {
    fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  }

  int size() const {
    return size_;
  }

  /// size/2+1 bins.
  void forward(const std::vector<double>& in, std::vector<Complex>& out) {
    fft_.fwd(out, in);
    out.resize(size_ / 2 + 1);
  }

  /// Inverse of forward() including the 1/size scale.
  void inverse(const std::vector<Complex>& in, std::vector<double>& out) {
    fft_.inv(out, in, size_);
  }

 private:
  int size_;
  Eigen::FFT<double> fft_;
};

/// Full complex inverse transform without the 1/N normalization.
inline void complexInverseUnscaled(
    Eigen::FFT<double>& fft,
    const std::vector<Complex>& in,
    std::vector<Complex>& out) {
  fft.inv(out, in);
  const double n = static_cast<double>(in.size());
  for (auto& v : out) {
    v *= n;
  }
}

inline int nextPow2(int n) {
  int p = 1;
  while (p < n) {
    p <<= 1;
  }
  return p;
}

} // namespace revoice::detail
