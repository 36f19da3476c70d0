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

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "bsr/stft.hpp"

namespace bsr {

inline constexpr int kDefaultSampleRate = 44100;
/// Ceiling reported by sdr() when the error energy vanishes.
inline constexpr double kSdrCeilingDb = 100.0;

/// Multichannel audio, channel-major: samples[c * length + i].
struct Waveform {
  int sample_rate = kDefaultSampleRate;
  std::size_t channels = 0;
  std::size_t length = 0;
  std::vector<float> samples;

  Waveform() = default;
  Waveform(std::size_t channels, std::size_t length, int sample_rate = kDefaultSampleRate);

  std::span<float> channel(std::size_t c) { return {samples.data() + c * length, length}; }
  std::span<const float> channel(std::size_t c) const {
    return {samples.data() + c * length, length};
  }
  float& at(std::size_t c, std::size_t i) { return samples[c * length + i]; }
  float at(std::size_t c, std::size_t i) const { return samples[c * length + i]; }
  float peak() const;
  bool empty() const { return samples.empty(); }
};

/// channels x frames x bins complex values.
struct ComplexSpectrogram {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<float>> values;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t channels, std::size_t frames, std::size_t bins);

  std::complex<float>& at(std::size_t c, std::size_t t, std::size_t f) {
    return values[(c * frames + t) * bins + f];
  }
  std::complex<float> at(std::size_t c, std::size_t t, std::size_t f) const {
    return values[(c * frames + t) * bins + f];
  }
  bool same_shape(const ComplexSpectrogram& o) const {
    return channels == o.channels && frames == o.frames && bins == o.bins;
  }
};

ComplexSpectrogram stft(const Waveform& x, const StftConfig& cfg);
Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg, std::size_t out_length,
               int sample_rate = kDefaultSampleRate);

/// Elementwise complex product M * X.
ComplexSpectrogram apply_mask(const ComplexSpectrogram& mask, const ComplexSpectrogram& x);

/// 10 log10(|y|^2 / |estimate - y|^2) over all channels, capped at kSdrCeilingDb.
double sdr(const Waveform& reference, const Waveform& estimate);

/// Median over 1-second chunks of the per-chunk SDR; chunks whose reference
/// is silent are skipped.
double chunked_median_sdr(const Waveform& reference, const Waveform& estimate,
                          double chunk_seconds = 1.0);

/// Median with the mean of the two middle values for even counts.
double median(std::vector<double> values);

}  // namespace bsr
