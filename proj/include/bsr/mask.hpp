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

// Per-band mask estimation: each band's D-dimensional feature becomes the
// complex ratio mask for that band's bins.

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "bsr/bandsplit.hpp"
#include "bsr/layers.hpp"
#include "bsr/rng.hpp"
#include "bsr/tensor.hpp"

namespace bsr {

template <typename T>
struct MaskBandParams {
  Tensor<T> norm;   // [D]
  Linear<T> hidden; // D -> 4D, tanh
  Linear<T> glu;    // 4D -> 2 * (2*C*Fn)
};

template <typename T>
struct MaskEstimatorParams {
  std::vector<MaskBandParams<T>> bands;
};

template <typename T>
MaskEstimatorParams<T> init_mask_estimator(const BandScheme& scheme, std::size_t channels,
                                           std::size_t dim, Rng& rng);

template <typename T>
void append_params(const MaskEstimatorParams<T>& params, NamedParams<T>& out);

std::size_t mask_estimator_param_count(const BandScheme& scheme, std::size_t channels,
                                       std::size_t dim);

/// H [B, T, N, D] -> mask [B, C, T, F, 2]. Each band's GLU output is read
/// as (channel, bin, re/im), the band-split flattening order.
template <typename T>
Tensor<T> mask_estimate(const Tensor<T>& h, const MaskEstimatorParams<T>& params,
                        const BandScheme& scheme, std::size_t channels);

/// Makes band n output the constant mask values[n] for every channel, bin
/// and frame, independent of the input: the GLU weights are zeroed, the value
/// bias holds the mask and the gate bias saturates the sigmoid.
template <typename T>
void set_constant_band_masks(MaskEstimatorParams<T>& params, const BandScheme& scheme,
                             std::size_t channels, const std::vector<std::complex<double>>& values);

}  // namespace bsr
