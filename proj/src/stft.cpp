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

#include "bsr/stft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "bsr/errors.hpp"

namespace bsr {

void StftConfig::validate() const {
  if (fft_size == 0 || fft_size % 2 != 0) {
    throw ConfigError("fft_size must be a positive even number, got " + std::to_string(fft_size));
  }
  if (hop == 0 || hop > fft_size) {
    throw ConfigError("hop must satisfy 0 < hop <= fft_size, got " + std::to_string(hop));
  }
}

std::size_t StftConfig::frames(std::size_t length) const {
  if (length == 0) throw DimensionError("STFT of an empty signal");
  if (centered) return length / hop + 1;
  if (length < fft_size) {
    throw DimensionError("uncentered STFT needs at least fft_size samples");
  }
  return (length - fft_size) / hop + 1;
}

std::size_t StftConfig::max_inverse_length(std::size_t frames) const {
  const std::size_t full = (frames - 1) * hop + fft_size;
  return centered ? full - fft_size / 2 : full;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

struct RealFft::Plans {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
};

namespace {

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t doubles) : ptr(fftw_alloc_real(doubles)) {
    if (ptr == nullptr) throw std::bad_alloc();
  }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  ~FftwBuffer() { fftw_free(ptr); }
  double* ptr;
};

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 2) throw ConfigError("FFT size must be at least 2");
  // Plans live for the whole process; fftw planning is not thread-safe.
  static std::map<std::size_t, std::unique_ptr<Plans>> cache;
  std::lock_guard lock(plan_mutex());
  auto& slot = cache[n];
  if (!slot) {
    auto plans = std::make_unique<Plans>();
    FftwBuffer real(n);
    FftwBuffer cplx(2 * (n / 2 + 1));
    auto* c = reinterpret_cast<fftw_complex*>(cplx.ptr);
    plans->r2c = fftw_plan_dft_r2c_1d(static_cast<int>(n), real.ptr, c, FFTW_ESTIMATE);
    plans->c2r = fftw_plan_dft_c2r_1d(static_cast<int>(n), c, real.ptr, FFTW_ESTIMATE);
    slot = std::move(plans);
  }
  plans_ = slot.get();
}

void RealFft::forward(const double* in, std::complex<double>* out) const {
  FftwBuffer real(n_);
  FftwBuffer cplx(2 * (n_ / 2 + 1));
  std::copy(in, in + n_, real.ptr);
  fftw_execute_dft_r2c(plans_->r2c, real.ptr, reinterpret_cast<fftw_complex*>(cplx.ptr));
  const auto* c = reinterpret_cast<const std::complex<double>*>(cplx.ptr);
  std::copy(c, c + n_ / 2 + 1, out);
}

void RealFft::inverse(const std::complex<double>* in, double* out) const {
  FftwBuffer real(n_);
  FftwBuffer cplx(2 * (n_ / 2 + 1));
  auto* c = reinterpret_cast<std::complex<double>*>(cplx.ptr);
  std::copy(in, in + n_ / 2 + 1, c);
  fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(cplx.ptr), real.ptr);
  std::copy(real.ptr, real.ptr + n_, out);
}

namespace stft_kernel {
namespace {

// Mirror index into [0, length) without repeating the edge sample.
std::size_t reflect(std::ptrdiff_t i, std::size_t length) {
  if (length == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (length - 1));
  auto m = ((i % period) + period) % period;
  if (m >= static_cast<std::ptrdiff_t>(length)) m = period - m;
  return static_cast<std::size_t>(m);
}

std::size_t padded_length(std::size_t length, const StftConfig& cfg) {
  return cfg.centered ? length + cfg.fft_size : length;
}

std::ptrdiff_t pad_offset(const StftConfig& cfg) {
  return cfg.centered ? static_cast<std::ptrdiff_t>(cfg.fft_size / 2) : 0;
}

// Squared-window envelope of an overlap-add over `frames` frames.
std::vector<double> window_envelope(const std::vector<double>& w, std::size_t frames,
                                    std::size_t hop) {
  std::vector<double> env((frames - 1) * hop + w.size(), 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < w.size(); ++j) env[t * hop + j] += w[j] * w[j];
  }
  return env;
}

void check_inverse_args(std::size_t frames, const StftConfig& cfg, std::size_t out_length) {
  cfg.validate();
  if (frames == 0) throw DimensionError("inverse STFT of zero frames");
  if (out_length == 0 || out_length > cfg.max_inverse_length(frames)) {
    throw DimensionError("inverse STFT output length " + std::to_string(out_length) +
                         " exceeds what " + std::to_string(frames) + " frames cover (" +
                         std::to_string(cfg.max_inverse_length(frames)) + ")");
  }
}

const std::vector<double>& envelope_checked(const std::vector<double>& env, const StftConfig& cfg,
                                            std::size_t out_length) {
  const auto off = static_cast<std::size_t>(pad_offset(cfg));
  for (std::size_t i = 0; i < out_length; ++i) {
    if (env[i + off] < 1e-11) {
      throw NumericalError("inverse STFT window envelope vanishes at sample " + std::to_string(i) +
                           " (hop/window violate overlap-add)");
    }
  }
  return env;
}

}  // namespace

template <typename T>
void forward(std::span<const T> signal, std::size_t rows, std::size_t length,
             const StftConfig& cfg, std::span<T> spec) {
  cfg.validate();
  const std::size_t n = cfg.fft_size;
  const std::size_t bins = cfg.bins();
  const std::size_t frames = cfg.frames(length);
  if (signal.size() != rows * length || spec.size() != rows * frames * bins * 2) {
    throw DimensionError("STFT buffer sizes do not match rows x length");
  }
  const auto w = hann_window(n);
  const RealFft fft(n);
  const auto off = pad_offset(cfg);
  std::vector<double> padded(padded_length(length, cfg));
  std::vector<double> frame(n);
  std::vector<std::complex<double>> out(bins);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = signal.data() + r * length;
    for (std::size_t j = 0; j < padded.size(); ++j) {
      padded[j] = static_cast<double>(x[reflect(static_cast<std::ptrdiff_t>(j) - off, length)]);
    }
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t j = 0; j < n; ++j) frame[j] = padded[t * cfg.hop + j] * w[j];
      fft.forward(frame.data(), out.data());
      T* dst = spec.data() + ((r * frames + t) * bins) * 2;
      for (std::size_t k = 0; k < bins; ++k) {
        dst[2 * k] = static_cast<T>(out[k].real());
        dst[2 * k + 1] = static_cast<T>(out[k].imag());
      }
    }
  }
}

template <typename T>
void forward_adjoint(std::span<const T> spec_grad, std::size_t rows, std::size_t length,
                     const StftConfig& cfg, std::span<T> signal_grad) {
  const std::size_t n = cfg.fft_size;
  const std::size_t bins = cfg.bins();
  const std::size_t frames = cfg.frames(length);
  const auto w = hann_window(n);
  const RealFft fft(n);
  const auto off = pad_offset(cfg);
  std::vector<double> padded(padded_length(length, cfg));
  std::vector<double> frame(n);
  std::vector<std::complex<double>> half(bins);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(padded.begin(), padded.end(), 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
      const T* g = spec_grad.data() + ((r * frames + t) * bins) * 2;
      // Re sum_k G_k e^{+i...} over the half spectrum equals c2r with the
      // interior bins halved (c2r counts them twice via Hermitian symmetry).
      for (std::size_t k = 0; k < bins; ++k) {
        const double scale = (k == 0 || k == n / 2) ? 1.0 : 0.5;
        half[k] = {scale * static_cast<double>(g[2 * k]), scale * static_cast<double>(g[2 * k + 1])};
      }
      if (n / 2 >= 1) half[n / 2] = {half[n / 2].real(), 0.0};
      half[0] = {half[0].real(), 0.0};
      fft.inverse(half.data(), frame.data());
      for (std::size_t j = 0; j < n; ++j) padded[t * cfg.hop + j] += frame[j] * w[j];
    }
    T* gx = signal_grad.data() + r * length;
    for (std::size_t j = 0; j < padded.size(); ++j) {
      gx[reflect(static_cast<std::ptrdiff_t>(j) - off, length)] += static_cast<T>(padded[j]);
    }
  }
}

template <typename T>
void inverse(std::span<const T> spec, std::size_t rows, std::size_t frames, const StftConfig& cfg,
             std::size_t out_length, std::span<T> out) {
  check_inverse_args(frames, cfg, out_length);
  const std::size_t n = cfg.fft_size;
  const std::size_t bins = cfg.bins();
  if (spec.size() != rows * frames * bins * 2 || out.size() != rows * out_length) {
    throw DimensionError("inverse STFT buffer sizes do not match");
  }
  const auto w = hann_window(n);
  const auto env = window_envelope(w, frames, cfg.hop);
  envelope_checked(env, cfg, out_length);
  const RealFft fft(n);
  const auto off = static_cast<std::size_t>(pad_offset(cfg));
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> buf(env.size());
  std::vector<double> frame(n);
  std::vector<std::complex<double>> half(bins);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
      const T* s = spec.data() + ((r * frames + t) * bins) * 2;
      for (std::size_t k = 0; k < bins; ++k) {
        half[k] = {static_cast<double>(s[2 * k]), static_cast<double>(s[2 * k + 1])};
      }
      fft.inverse(half.data(), frame.data());
      for (std::size_t j = 0; j < n; ++j) buf[t * cfg.hop + j] += frame[j] * inv_n * w[j];
    }
    T* y = out.data() + r * out_length;
    for (std::size_t i = 0; i < out_length; ++i) y[i] = static_cast<T>(buf[i + off] / env[i + off]);
  }
}

template <typename T>
void inverse_adjoint(std::span<const T> out_grad, std::size_t rows, std::size_t frames,
                     const StftConfig& cfg, std::size_t out_length, std::span<T> spec_grad) {
  check_inverse_args(frames, cfg, out_length);
  const std::size_t n = cfg.fft_size;
  const std::size_t bins = cfg.bins();
  const auto w = hann_window(n);
  const auto env = window_envelope(w, frames, cfg.hop);
  envelope_checked(env, cfg, out_length);
  const RealFft fft(n);
  const auto off = static_cast<std::size_t>(pad_offset(cfg));
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> buf(env.size());
  std::vector<double> frame(n);
  std::vector<std::complex<double>> half(bins);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const T* g = out_grad.data() + r * out_length;
    for (std::size_t i = 0; i < out_length; ++i) buf[i + off] = static_cast<double>(g[i]) / env[i + off];
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t j = 0; j < n; ++j) frame[j] = buf[t * cfg.hop + j] * w[j];
      fft.forward(frame.data(), half.data());
      T* d = spec_grad.data() + ((r * frames + t) * bins) * 2;
      for (std::size_t k = 0; k < bins; ++k) {
        const double c = ((k == 0 || k == n / 2) ? 1.0 : 2.0) * inv_n;
        d[2 * k] += static_cast<T>(c * half[k].real());
        // c2r ignores the imaginary part of DC and Nyquist.
        if (k != 0 && k != n / 2) d[2 * k + 1] += static_cast<T>(c * half[k].imag());
      }
    }
  }
}

#define BSR_INSTANTIATE_STFT(T)                                                                  \
  template void forward<T>(std::span<const T>, std::size_t, std::size_t, const StftConfig&,      \
                           std::span<T>);                                                        \
  template void forward_adjoint<T>(std::span<const T>, std::size_t, std::size_t,                 \
                                   const StftConfig&, std::span<T>);                             \
  template void inverse<T>(std::span<const T>, std::size_t, std::size_t, const StftConfig&,      \
                           std::size_t, std::span<T>);                                           \
  template void inverse_adjoint<T>(std::span<const T>, std::size_t, std::size_t,                 \
                                   const StftConfig&, std::size_t, std::span<T>);

BSR_INSTANTIATE_STFT(float)
BSR_INSTANTIATE_STFT(double)
#undef BSR_INSTANTIATE_STFT

}  // namespace stft_kernel
}  // namespace bsr
