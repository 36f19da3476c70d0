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

#include "bsr/bandsplit.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "bsr/errors.hpp"
#include "bsr/ops.hpp"

namespace bsr {

std::size_t BandScheme::total_bins() const {
  return std::accumulate(widths.begin(), widths.end(), std::size_t{0});
}

std::size_t BandScheme::start(std::size_t n) const {
  if (n > widths.size()) throw DimensionError("band index " + std::to_string(n) + " out of range");
  return std::accumulate(widths.begin(), widths.begin() + static_cast<std::ptrdiff_t>(n),
                         std::size_t{0});
}

std::size_t BandScheme::band_of(std::size_t bin) const {
  std::size_t edge = 0;
  for (std::size_t n = 0; n < widths.size(); ++n) {
    edge += widths[n];
    if (bin < edge) return n;
  }
  throw DimensionError("bin " + std::to_string(bin) + " lies outside the band scheme");
}

void BandScheme::validate(std::size_t bins) const {
  if (widths.empty()) throw ConfigError("band scheme is empty");
  for (std::size_t n = 0; n < widths.size(); ++n) {
    if (widths[n] == 0) throw ConfigError("band " + std::to_string(n) + " has zero width");
  }
  if (total_bins() != bins) {
    throw ConfigError("band widths sum to " + std::to_string(total_bins()) + " but the spectrogram has " +
                      std::to_string(bins) + " bins");
  }
}

std::string BandScheme::to_list() const {
  std::ostringstream out;
  for (std::size_t n = 0; n < widths.size(); ++n) out << (n ? "," : "") << widths[n];
  return out.str();
}

BandScheme BandScheme::from_list(const std::string& text) {
  BandScheme scheme;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    if (first == std::string::npos) throw ConfigError("empty entry in band list '" + text + "'");
    const std::string token = item.substr(first, last - first + 1);
    std::size_t used = 0;
    long long value = 0;
    try {
      value = std::stoll(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size() || value <= 0) {
      throw ConfigError("band width '" + token + "' is not a positive integer");
    }
    scheme.widths.push_back(static_cast<std::size_t>(value));
  }
  if (scheme.widths.empty()) throw ConfigError("band list is empty");
  return scheme;
}

const std::vector<BandRule>& default_band_rules() {
  static const std::vector<BandRule> rules = {
      {1000.0, 2}, {2000.0, 4}, {4000.0, 12}, {8000.0, 24}, {16000.0, 48}};
  return rules;
}

BandScheme band_scheme_from_rules(const StftConfig& cfg, int sample_rate,
                                  const std::vector<BandRule>& rules) {
  cfg.validate();
  if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
  const std::size_t bins = cfg.bins();
  const double hz_per_bin = static_cast<double>(sample_rate) / static_cast<double>(cfg.fft_size);
  BandScheme scheme;
  std::size_t start = 0;
  for (const auto& rule : rules) {
    if (rule.width == 0) throw ConfigError("band rule with zero width");
    const double boundary = rule.upper_hz / hz_per_bin;
    if (boundary <= static_cast<double>(start)) continue;
    const auto count = static_cast<std::size_t>(
        std::ceil((boundary - static_cast<double>(start)) / static_cast<double>(rule.width) - 1e-9));
    if (start + count * rule.width + 2 > bins) {
      std::ostringstream msg;
      msg << "band rule (" << rule.width << " bins below " << rule.upper_hz << " Hz) needs "
          << count << " bands ending at bin " << start + count * rule.width << ", leaving fewer than 2 of "
          << bins << " bins for the top bands (fft " << cfg.fft_size << ", " << sample_rate << " Hz)";
      throw ConfigError(msg.str());
    }
    scheme.widths.insert(scheme.widths.end(), count, rule.width);
    start += count * rule.width;
  }
  const std::size_t rest = bins - start;
  if (rest < 2) throw ConfigError("band rules leave fewer than 2 bins for the top bands");
  scheme.widths.push_back(rest / 2);
  scheme.widths.push_back(rest - rest / 2);
  scheme.validate(bins);
  return scheme;
}

BandScheme default_band_scheme(const StftConfig& cfg, int sample_rate) {
  return band_scheme_from_rules(cfg, sample_rate, default_band_rules());
}

std::size_t band_feature_size(const BandScheme& scheme, std::size_t n, std::size_t channels) {
  return 2 * channels * scheme.widths.at(n);
}

std::size_t band_split_param_count(const BandScheme& scheme, std::size_t channels, std::size_t dim) {
  std::size_t total = 0;
  for (std::size_t n = 0; n < scheme.count(); ++n) {
    const std::size_t in = band_feature_size(scheme, n, channels);
    total += in * dim + dim + in;
  }
  return total;
}

template <typename T>
BandSplitParams<T> init_band_split(const BandScheme& scheme, std::size_t channels,
                                   std::size_t dim, Rng& rng) {
  BandSplitParams<T> params;
  params.bands.reserve(scheme.count());
  for (std::size_t n = 0; n < scheme.count(); ++n) {
    const std::size_t in = band_feature_size(scheme, n, channels);
    params.bands.push_back({init_norm_scale<T>(in), init_linear<T>(in, dim, rng)});
  }
  return params;
}

template <typename T>
Tensor<T> band_split_forward(const Tensor<T>& spec, const BandScheme& scheme,
                             const BandSplitParams<T>& params) {
  if (spec.rank() != 5 || spec.dim(4) != 2) {
    throw DimensionError("band split expects [B, C, T, F, 2], got " + to_string(spec.shape()));
  }
  const std::size_t batch = spec.dim(0);
  const std::size_t channels = spec.dim(1);
  const std::size_t frames = spec.dim(2);
  scheme.validate(spec.dim(3));
  if (params.bands.size() != scheme.count()) {
    throw MismatchError("band split has " + std::to_string(params.bands.size()) +
                        " parameter groups for " + std::to_string(scheme.count()) + " bands");
  }
  // [B, T, C, F, 2] so each band slice flattens contiguously per frame.
  const auto framewise = ops::permute(spec, {0, 2, 1, 3, 4});
  std::vector<Tensor<T>> outputs;
  outputs.reserve(scheme.count());
  std::size_t start = 0;
  for (std::size_t n = 0; n < scheme.count(); ++n) {
    const std::size_t width = scheme.widths[n];
    const std::size_t in = 2 * channels * width;
    const auto& group = params.bands[n];
    if (group.norm.numel() != in || group.proj.in_features() != in) {
      throw MismatchError("band " + std::to_string(n) + " expects " + std::to_string(in) +
                          " input features, parameters hold " +
                          std::to_string(group.proj.in_features()));
    }
    auto band = ops::slice(framewise, 3, start, width);
    band = ops::reshape(band, {batch, frames, 1, in});
    outputs.push_back(linear(rmsnorm(band, group.norm), group.proj));
    start += width;
  }
  return ops::concat(outputs, 2);
}

#define BSR_INSTANTIATE_BANDSPLIT(T)                                                          \
  template BandSplitParams<T> init_band_split<T>(const BandScheme&, std::size_t, std::size_t, \
                                                 Rng&);                                       \
  template Tensor<T> band_split_forward(const Tensor<T>&, const BandScheme&,                  \
                                        const BandSplitParams<T>&);

BSR_INSTANTIATE_BANDSPLIT(float)
BSR_INSTANTIATE_BANDSPLIT(double)
#undef BSR_INSTANTIATE_BANDSPLIT

}  // namespace bsr
