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

#include "bsr/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bsr/errors.hpp"

namespace bsr {

Waveform::Waveform(std::size_t channels, std::size_t length, int sample_rate)
    : sample_rate(sample_rate), channels(channels), length(length), samples(channels * length, 0.0f) {}

float Waveform::peak() const {
  float p = 0.0f;
  for (float v : samples) p = std::max(p, std::abs(v));
  return p;
}

ComplexSpectrogram::ComplexSpectrogram(std::size_t channels, std::size_t frames, std::size_t bins)
    : channels(channels), frames(frames), bins(bins), values(channels * frames * bins) {}

ComplexSpectrogram stft(const Waveform& x, const StftConfig& cfg) {
  cfg.validate();
  if (x.channels == 0 || x.length == 0) throw DimensionError("STFT of an empty signal");
  ComplexSpectrogram spec(x.channels, cfg.frames(x.length), cfg.bins());
  std::span<float> flat(reinterpret_cast<float*>(spec.values.data()), spec.values.size() * 2);
  stft_kernel::forward<float>(x.samples, x.channels, x.length, cfg, flat);
  return spec;
}

Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg, std::size_t out_length,
               int sample_rate) {
  cfg.validate();
  if (spec.bins != cfg.bins()) {
    throw DimensionError("spectrogram has " + std::to_string(spec.bins) + " bins, config expects " +
                         std::to_string(cfg.bins()));
  }
  Waveform out(spec.channels, out_length, sample_rate);
  std::span<const float> flat(reinterpret_cast<const float*>(spec.values.data()), spec.values.size() * 2);
  stft_kernel::inverse<float>(flat, spec.channels, spec.frames, cfg, out_length, out.samples);
  return out;
}

ComplexSpectrogram apply_mask(const ComplexSpectrogram& mask, const ComplexSpectrogram& x) {
  if (!mask.same_shape(x)) throw DimensionError("mask and spectrogram shapes differ");
  ComplexSpectrogram out(x.channels, x.frames, x.bins);
  for (std::size_t i = 0; i < x.values.size(); ++i) out.values[i] = mask.values[i] * x.values[i];
  return out;
}

namespace {

void check_pair(const Waveform& reference, const Waveform& estimate) {
  if (reference.channels != estimate.channels || reference.length != estimate.length) {
    throw DimensionError("reference and estimate differ in shape (" +
                         std::to_string(reference.channels) + "x" + std::to_string(reference.length) +
                         " vs " + std::to_string(estimate.channels) + "x" +
                         std::to_string(estimate.length) + ")");
  }
}

// Energies over samples [begin, end) of every channel.
std::pair<double, double> energies(const Waveform& reference, const Waveform& estimate,
                                   std::size_t begin, std::size_t end) {
  double signal = 0.0;
  double error = 0.0;
  for (std::size_t c = 0; c < reference.channels; ++c) {
    for (std::size_t i = begin; i < end; ++i) {
      const double y = reference.at(c, i);
      const double e = static_cast<double>(estimate.at(c, i)) - y;
      signal += y * y;
      error += e * e;
    }
  }
  return {signal, error};
}

double sdr_from_energies(double signal, double error) {
  if (error <= 0.0) return kSdrCeilingDb;
  return std::min(kSdrCeilingDb, 10.0 * std::log10(signal / error));
}

}  // namespace

double sdr(const Waveform& reference, const Waveform& estimate) {
  check_pair(reference, estimate);
  const auto [signal, error] = energies(reference, estimate, 0, reference.length);
  if (signal <= 0.0) throw DataError("SDR undefined for a silent reference");
  return sdr_from_energies(signal, error);
}

double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double chunked_median_sdr(const Waveform& reference, const Waveform& estimate, double chunk_seconds) {
  check_pair(reference, estimate);
  const auto chunk = static_cast<std::size_t>(std::llround(chunk_seconds * reference.sample_rate));
  if (chunk == 0 || reference.length < chunk) {
    throw DataError("signal shorter than one SDR chunk");
  }
  std::vector<double> values;
  for (std::size_t begin = 0; begin + chunk <= reference.length; begin += chunk) {
    const auto [signal, error] = energies(reference, estimate, begin, begin + chunk);
    if (signal <= 0.0) continue;
    values.push_back(sdr_from_energies(signal, error));
  }
  if (values.empty()) throw DataError("every SDR chunk has a silent reference");
  return median(std::move(values));
}

}  // namespace bsr
