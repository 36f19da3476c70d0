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

// Synthetic songs whose stems occupy disjoint frequency ranges, and the
// band masks that separate them exactly.

#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "bsr/bandsplit.hpp"
#include "bsr/dsp.hpp"
#include "bsr/rng.hpp"
#include "bsr/training.hpp"

namespace bsr {

struct ToneRange {
  double low_hz;
  double high_hz;
};

inline constexpr double kFixtureFadeSeconds = 0.05;

/// Frequency ranges of the vocals, bass, drums and other fixture stems.
const std::array<ToneRange, 4>& fixture_ranges();

/// Sum of `tones` sinusoids with frequencies snapped to the bin centres of a
/// `grid`-point FFT inside [low, high], random phases and a slow amplitude
/// swell, scaled to `peak`. Both ends fade in and out over
/// kFixtureFadeSeconds so that the onsets do not splatter across bands.
Waveform tone_stem(std::size_t channels, std::size_t length, int sample_rate, const ToneRange& range,
                   std::size_t tones, float peak, Rng& rng, std::size_t grid = 2048);

/// Four-stem song built from fixture_ranges().
Song synthetic_song(const std::string& name, double seconds, int sample_rate, std::size_t channels, Rng& rng);

/// Per-band mask values: 1 for bands overlapping [low, high] widened by two
/// bins on each side, else 0.
std::vector<std::complex<double>> band_range_mask(const BandScheme& scheme, const StftConfig& stft,
                                                  int sample_rate, const ToneRange& range);

}  // namespace bsr
