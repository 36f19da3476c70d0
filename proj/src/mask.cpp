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

#include "bsr/mask.hpp"

#include <string>

#include "bsr/errors.hpp"
#include "bsr/ops.hpp"

namespace bsr {

namespace {
// sigmoid(40) rounds to exactly 1 in both precisions.
constexpr double kSaturatedGate = 40.0;
}  // namespace

template <typename T>
MaskEstimatorParams<T> init_mask_estimator(const BandScheme& scheme, std::size_t channels,
                                           std::size_t dim, Rng& rng) {
  MaskEstimatorParams<T> params;
  for (std::size_t n = 0; n < scheme.count(); ++n) {
    const std::size_t out = band_feature_size(scheme, n, channels);
    params.bands.push_back({init_norm_scale<T>(dim), init_linear<T>(dim, 4 * dim, rng),
                            init_linear<T>(4 * dim, 2 * out, rng)});
  }
  return params;
}

template <typename T>
void append_params(const MaskEstimatorParams<T>& params, NamedParams<T>& out) {
  for (std::size_t n = 0; n < params.bands.size(); ++n) {
    const std::string prefix = "mask." + std::to_string(n) + ".";
    out.emplace_back(prefix + "norm", params.bands[n].norm);
    append_params(params.bands[n].hidden, prefix + "w_hidden", prefix + "b_hidden", out);
    append_params(params.bands[n].glu, prefix + "w_glu", prefix + "b_glu", out);
  }
}

std::size_t mask_estimator_param_count(const BandScheme& scheme, std::size_t channels,
                                       std::size_t dim) {
  std::size_t total = 0;
  for (std::size_t n = 0; n < scheme.count(); ++n) {
    const std::size_t out = band_feature_size(scheme, n, channels);
    total += dim + (dim * 4 * dim + 4 * dim) + (4 * dim * 2 * out + 2 * out);
  }
  return total;
}

template <typename T>
Tensor<T> mask_estimate(const Tensor<T>& h, const MaskEstimatorParams<T>& params,
                        const BandScheme& scheme, std::size_t channels) {
  if (h.rank() != 4) throw DimensionError("mask estimator expects [B, T, N, D], got " + to_string(h.shape()));
  const std::size_t batch = h.dim(0), frames = h.dim(1), bands = h.dim(2), dim = h.dim(3);
  if (bands != scheme.count() || params.bands.size() != scheme.count()) {
    throw MismatchError("mask estimator: input has " + std::to_string(bands) + " bands, scheme " +
                        std::to_string(scheme.count()) + ", parameters " +
                        std::to_string(params.bands.size()));
  }
  std::vector<Tensor<T>> parts;
  parts.reserve(bands);
  for (std::size_t n = 0; n < bands; ++n) {
    const auto& p = params.bands[n];
    const std::size_t width = scheme.widths[n];
    const std::size_t out = 2 * channels * width;
    if (p.hidden.in_features() != dim || p.glu.out_features() != 2 * out) {
      throw MismatchError("mask estimator band " + std::to_string(n) + " parameters do not match " +
                          std::to_string(channels) + " channels x " + std::to_string(width) + " bins");
    }
    auto x = ops::reshape(ops::slice(h, 2, n, 1), {batch, frames, dim});
    x = ops::tanh(linear(rmsnorm(x, p.norm), p.hidden));
    x = glu(linear(x, p.glu));
    parts.push_back(ops::reshape(x, {batch, frames, channels, width, 2}));
  }
  return ops::permute(ops::concat(parts, 3), {0, 2, 1, 3, 4});
}

template <typename T>
void set_constant_band_masks(MaskEstimatorParams<T>& params, const BandScheme& scheme,
                             std::size_t channels, const std::vector<std::complex<double>>& values) {
  if (values.size() != scheme.count() || params.bands.size() != scheme.count()) {
    throw MismatchError("constant mask needs one value per band");
  }
  for (std::size_t n = 0; n < scheme.count(); ++n) {
    auto& glu_layer = params.bands[n].glu;
    const std::size_t out = band_feature_size(scheme, n, channels);
    for (auto& w : glu_layer.weight.mutable_data()) w = T(0);
    auto bias = glu_layer.bias.mutable_data();
    for (std::size_t i = 0; i < out; ++i) {
      bias[i] = static_cast<T>(i % 2 == 0 ? values[n].real() : values[n].imag());
      bias[out + i] = static_cast<T>(kSaturatedGate);
    }
  }
}

#define BSR_INSTANTIATE_MASK(T)                                                                   \
  template MaskEstimatorParams<T> init_mask_estimator<T>(const BandScheme&, std::size_t,          \
                                                         std::size_t, Rng&);                      \
  template void append_params(const MaskEstimatorParams<T>&, NamedParams<T>&);                    \
  template Tensor<T> mask_estimate(const Tensor<T>&, const MaskEstimatorParams<T>&,               \
                                   const BandScheme&, std::size_t);                               \
  template void set_constant_band_masks(MaskEstimatorParams<T>&, const BandScheme&, std::size_t, \
                                        const std::vector<std::complex<double>>&);

BSR_INSTANTIATE_MASK(float)
BSR_INSTANTIATE_MASK(double)
#undef BSR_INSTANTIATE_MASK

}  // namespace bsr
