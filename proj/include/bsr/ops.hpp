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

// Differentiable primitives. Every function records itself on the active
// tape when an input requires a gradient; composite layers elsewhere are
// built only from these.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bsr/rng.hpp"
#include "bsr/stft.hpp"
#include "bsr/tensor.hpp"

namespace bsr {

class RopeEncoder;

namespace ops {

// Binary elementwise ops broadcast with numpy rules.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T c);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& x, T c);

/// Exact erf-based GeLU.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
/// Subgradient 0 at 0.
template <typename T> Tensor<T> abs(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);
/// 1/sqrt(x); x must be positive.
template <typename T> Tensor<T> rsqrt(const Tensor<T>& x);

/// Sum of all elements, shape {1}.
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> sum_axis(const Tensor<T>& x, int axis, bool keepdim);
template <typename T> Tensor<T> mean_axis(const Tensor<T>& x, int axis, bool keepdim);

/// Numerically stable softmax along `axis`.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);

/// [..., M, K] x [..., K, P]; leading dimensions broadcast.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
/// Elements [start, start + length) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t start, std::size_t length);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

/// Inverted dropout; identity when !training or rate == 0. rng may be null then.
template <typename T> Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, Rng* rng);

/// Rotates consecutive pairs of the last axis by position-dependent angles.
/// `seq_axis` indexes the sequence dimension, `positions` gives one position
/// per element along it.
template <typename T>
Tensor<T> rope_rotate(const Tensor<T>& x, const RopeEncoder& encoder, int seq_axis,
                      std::span<const std::size_t> positions);

/// Complex product of two tensors whose last axis holds (re, im).
template <typename T> Tensor<T> complex_mul(const Tensor<T>& a, const Tensor<T>& b);

/// [..., L] -> [..., frames, bins, 2].
template <typename T> Tensor<T> stft(const Tensor<T>& x, const StftConfig& cfg);
/// [..., frames, bins, 2] -> [..., length].
template <typename T>
Tensor<T> istft(const Tensor<T>& spec, const StftConfig& cfg, std::size_t length);

}  // namespace ops

/// Broadcast shape of a and b; DimensionError naming both on mismatch.
Shape broadcast_shapes(const Shape& a, const Shape& b);

}  // namespace bsr
