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

// Uneven subband partition of the spectrogram and the per-band projections
// that turn each band into a D-dimensional frame feature.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bsr/layers.hpp"
#include "bsr/rng.hpp"
#include "bsr/stft.hpp"
#include "bsr/tensor.hpp"

namespace bsr {

/// Ordered, contiguous partition of the frequency axis.
struct BandScheme {
  std::vector<std::size_t> widths;

  std::size_t count() const { return widths.size(); }
  std::size_t total_bins() const;
  /// First bin of band n.
  std::size_t start(std::size_t n) const;
  /// Band containing `bin`.
  std::size_t band_of(std::size_t bin) const;
  /// Throws ConfigError unless widths are positive and sum to `bins`.
  void validate(std::size_t bins) const;

  std::string to_list() const;
  static BandScheme from_list(const std::string& text);

  bool operator==(const BandScheme&) const = default;
};

/// One region of the frequency rule: bins below `upper_hz` use `width`.
struct BandRule {
  double upper_hz;
  std::size_t width;
};

/// 2 bins under 1 kHz, 4 under 2 kHz, 12 under 4 kHz, 24 under 8 kHz,
/// 48 under 16 kHz, remainder split in two.
const std::vector<BandRule>& default_band_rules();

/// Scheme from the frequency rules. Each region holds enough whole bands to
/// reach its upper boundary; the bins above the last region form two bands.
BandScheme band_scheme_from_rules(const StftConfig& cfg, int sample_rate,
                                  const std::vector<BandRule>& rules);
BandScheme default_band_scheme(const StftConfig& cfg, int sample_rate);

template <typename T>
struct BandProjection {
  Tensor<T> norm;  // [2*C*Fn]
  Linear<T> proj;  // [2*C*Fn, D]
};

template <typename T>
struct BandSplitParams {
  std::vector<BandProjection<T>> bands;
};

template <typename T>
BandSplitParams<T> init_band_split(const BandScheme& scheme, std::size_t channels,
                                   std::size_t dim, Rng& rng);

/// Input width of band n's projection.
std::size_t band_feature_size(const BandScheme& scheme, std::size_t n, std::size_t channels);

std::size_t band_split_param_count(const BandScheme& scheme, std::size_t channels,
                                   std::size_t dim);

/// spec [B, C, T, F, 2] -> [B, T, N, D]. Per frame and band the features are
/// ordered channel, bin, re/im with re/im fastest.
template <typename T>
Tensor<T> band_split_forward(const Tensor<T>& spec, const BandScheme& scheme,
                             const BandSplitParams<T>& params);

}  // namespace bsr
