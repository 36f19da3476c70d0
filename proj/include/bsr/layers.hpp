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

// Small building blocks shared by the band-split, transformer and mask
// estimation modules.

#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "bsr/ops.hpp"
#include "bsr/rng.hpp"
#include "bsr/tensor.hpp"

namespace bsr {

/// RMSNorm epsilon per precision.
template <typename T>
constexpr T rms_epsilon() {
  if constexpr (sizeof(T) == sizeof(float)) {
    return T(1e-8);
  } else {
    return T(1e-12);
  }
}

/// Trainable tensors in a fixed order with stable names; the order defines
/// optimizer state layout and checkpoint sections.
template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

/// Affine map x W + b with W stored [in, out].
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

template <typename T>
void append_params(const Linear<T>& layer, const std::string& weight_name,
                   const std::string& bias_name, NamedParams<T>& out) {
  out.emplace_back(weight_name, layer.weight);
  out.emplace_back(bias_name, layer.bias);
}

/// Weights ~ N(0, 1/sqrt(fan_in)), zero bias; both marked trainable.
template <typename T>
Linear<T> init_linear(std::size_t in, std::size_t out, Rng& rng);

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Linear<T>& layer);

/// x / sqrt(mean(x^2 over the last axis) + eps) * scale.
template <typename T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& scale, T eps = rms_epsilon<T>());

/// Trainable vector of ones.
template <typename T>
Tensor<T> init_norm_scale(std::size_t size);

/// Gated linear unit over the last axis: first half * sigmoid(second half).
template <typename T>
Tensor<T> glu(const Tensor<T>& x);

}  // namespace bsr
