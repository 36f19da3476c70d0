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

#include "bsr/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bsr/errors.hpp"

namespace bsr {

const std::array<ToneRange, 4>& fixture_ranges() {
  static const std::array<ToneRange, 4> ranges = {
      ToneRange{300.0, 1800.0}, ToneRange{50.0, 180.0}, ToneRange{2500.0, 7000.0}, ToneRange{9000.0, 15000.0}};
  return ranges;
}

Waveform tone_stem(std::size_t channels, std::size_t length, int sample_rate, const ToneRange& range,
                   std::size_t tones, float peak, Rng& rng, std::size_t grid) {
  const double step = static_cast<double>(sample_rate) / static_cast<double>(grid);
  const auto lo = static_cast<std::size_t>(std::ceil(range.low_hz / step));
  const auto hi = static_cast<std::size_t>(std::floor(range.high_hz / step));
  if (hi < lo) throw ConfigError("tone range holds no FFT bin centre");
  std::uniform_int_distribution<std::size_t> bin(lo, hi);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> level(0.3, 1.0);
  Waveform w(channels, length, sample_rate);
  const double swell_hz = 0.5;
  const double swell_phase = phase(rng);
  for (std::size_t k = 0; k < tones; ++k) {
    const double freq = static_cast<double>(bin(rng)) * step;
    const double amp = level(rng);
    for (std::size_t c = 0; c < channels; ++c) {
      const double ph = phase(rng);
      auto ch = w.channel(c);
      for (std::size_t i = 0; i < length; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        ch[i] += static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * t + ph));
      }
    }
  }
  double top = 0;
  for (float v : w.samples) top = std::max(top, static_cast<double>(std::abs(v)));
  const auto fade = std::min(static_cast<std::size_t>(kFixtureFadeSeconds * sample_rate), length / 2);
  auto envelope = [&](std::size_t i) {
    const std::size_t edge = std::min(i, length - 1 - i);
    if (edge >= fade) return 1.0;
    return 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) / static_cast<double>(fade));
  };
  for (std::size_t c = 0; c < channels; ++c) {
    auto ch = w.channel(c);
    for (std::size_t i = 0; i < length; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      const double swell = 0.75 + 0.25 * std::sin(2.0 * std::numbers::pi * swell_hz * t + swell_phase);
      ch[i] = static_cast<float>(ch[i] / top * swell * envelope(i) * peak);
    }
  }
  return w;
}

Song synthetic_song(const std::string& name, double seconds, int sample_rate, std::size_t channels, Rng& rng) {
  const auto length = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  Song song;
  song.name = name;
  const std::array<std::size_t, 4> tones = {6, 3, 8, 8};
  const std::array<float, 4> peaks = {0.25f, 0.3f, 0.15f, 0.1f};
  for (std::size_t s = 0; s < 4; ++s) {
    song.stems[s] = tone_stem(channels, length, sample_rate, fixture_ranges()[s], tones[s], peaks[s], rng);
  }
  return song;
}

std::vector<std::complex<double>> band_range_mask(const BandScheme& scheme, const StftConfig& stft,
                                                  int sample_rate, const ToneRange& range) {
  const double hz_per_bin = static_cast<double>(sample_rate) / static_cast<double>(stft.fft_size);
  // A Hann-windowed tone also occupies the two neighbouring bins.
  const double low = range.low_hz - 2.0 * hz_per_bin;
  const double high = range.high_hz + 2.0 * hz_per_bin;
  std::vector<std::complex<double>> values;
  for (std::size_t n = 0; n < scheme.count(); ++n) {
    const double first = static_cast<double>(scheme.start(n)) * hz_per_bin;
    const double last = static_cast<double>(scheme.start(n) + scheme.widths[n] - 1) * hz_per_bin;
    values.emplace_back(last >= low && first <= high ? 1.0 : 0.0, 0.0);
  }
  return values;
}

}  // namespace bsr
