// Copyright 2026 The bsroformer Authors
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

// Hann-windowed STFT/iSTFT kernels shared by the waveform-level DSP API and
// the differentiable tensor primitives. All transforms run in double
// precision internally regardless of the element type.

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace bsr {

struct StftConfig {
  std::size_t fft_size = 2048;
  std::size_t hop = 441;
  bool centered = true;

  void validate() const;
  std::size_t bins() const { return fft_size / 2 + 1; }
  /// Frame count for a signal of `length` samples.
  std::size_t frames(std::size_t length) const;
  /// Largest output length an inverse transform of `frames` frames can fill.
  std::size_t max_inverse_length(std::size_t frames) const;

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/// Unnormalized real FFT of one size; plans are cached process-wide.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  std::size_t size() const { return n_; }
  /// out has n/2+1 entries.
  void forward(const double* in, std::complex<double>* out) const;
  /// Inverse of a half spectrum (imaginary parts of DC/Nyquist ignored), no 1/n.
  void inverse(const std::complex<double>* in, double* out) const;

 private:
  struct Plans;
  std::size_t n_;
  const Plans* plans_;
};

namespace stft_kernel {

// Layouts: signals are `rows` contiguous runs of `length` samples; spectra are
// rows x frames x bins x 2 (re, im interleaved). Adjoint kernels accumulate.

template <typename T>
void forward(std::span<const T> signal, std::size_t rows, std::size_t length,
             const StftConfig& cfg, std::span<T> spec);

template <typename T>
void forward_adjoint(std::span<const T> spec_grad, std::size_t rows, std::size_t length,
                     const StftConfig& cfg, std::span<T> signal_grad);

template <typename T>
void inverse(std::span<const T> spec, std::size_t rows, std::size_t frames, const StftConfig& cfg,
             std::size_t out_length, std::span<T> out);

template <typename T>
void inverse_adjoint(std::span<const T> out_grad, std::size_t rows, std::size_t frames,
                     const StftConfig& cfg, std::size_t out_length, std::span<T> spec_grad);

}  // namespace stft_kernel
}  // namespace bsr
