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

// Hierarchical transformer over the time and band axes: each block applies a
// transformer layer along time for every band, then one along bands for every
// frame. Attention uses rotary position encoding, or learned absolute tables
// for the ablation variant.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "bsr/layers.hpp"
#include "bsr/rng.hpp"
#include "bsr/rope.hpp"
#include "bsr/tensor.hpp"

namespace bsr {

enum class PositionalVariant { rope, learned_absolute };

std::string to_string(PositionalVariant v);
PositionalVariant parse_positional_variant(const std::string& text);

struct RoformerConfig {
  std::size_t dim = 384;
  std::size_t depth = 12;
  std::size_t heads = 8;
  double attn_dropout = 0.1;
  double ff_dropout = 0.1;
  PositionalVariant positional = PositionalVariant::rope;
  // Table sizes for the absolute variant; RoPE angle cache sizes otherwise.
  std::size_t max_time = 801;
  std::size_t max_bands = 62;
  double rope_base = 10000.0;

  std::size_t head_dim() const { return dim / heads; }
  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
};

template <typename T>
struct AttentionParams {
  Tensor<T> norm;
  Linear<T> q, k, v, out;
};

template <typename T>
struct FeedForwardParams {
  Tensor<T> norm;
  Linear<T> up;    // D -> 4D
  Linear<T> down;  // 4D -> D
};

template <typename T>
struct LayerParams {
  AttentionParams<T> attn;
  FeedForwardParams<T> ff;
};

template <typename T>
struct BlockParams {
  LayerParams<T> time;
  LayerParams<T> band;
};

template <typename T>
struct RoformerParams {
  std::vector<BlockParams<T>> blocks;
  // learned_absolute only: [max_time, D] and [max_bands, D], shared by all blocks.
  Tensor<T> pos_time;
  Tensor<T> pos_band;
};

/// Rotary encoders for the two axes; each axis has its own.
struct RopeEncoders {
  RopeEncoder time;
  RopeEncoder band;
};

RopeEncoders make_rope_encoders(const RoformerConfig& cfg);

/// Dropout rates and randomness for one forward pass.
struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;
};

template <typename T>
LayerParams<T> init_layer(std::size_t dim, Rng& rng);

template <typename T>
RoformerParams<T> init_roformer(const RoformerConfig& cfg, Rng& rng);

template <typename T>
void append_params(const RoformerParams<T>& params, NamedParams<T>& out);

std::size_t layer_param_count(std::size_t dim);
std::size_t attention_param_count(std::size_t dim);
std::size_t feedforward_param_count(std::size_t dim);
std::size_t roformer_param_count(const RoformerConfig& cfg);

/// Self-attention sublayer with residual on H [S, seq, D]. `rope` rotates
/// queries and keys; `position_table` ([>= seq, D]) is added to the normalised
/// input instead. Both may be absent.
template <typename T>
Tensor<T> attention(const Tensor<T>& h, const AttentionParams<T>& p, std::size_t heads,
                    const RopeEncoder* rope, const std::type_identity_t<Tensor<T>>* position_table, double dropout,
                    const ForwardMode& mode);

/// Feedforward sublayer with residual on H [..., D].
template <typename T>
Tensor<T> feedforward(const Tensor<T>& h, const FeedForwardParams<T>& p, double dropout,
                      const ForwardMode& mode);

/// One transformer layer (attention then feedforward) over H [S, seq, D].
template <typename T>
Tensor<T> transformer_layer(const Tensor<T>& h, const LayerParams<T>& p, const RoformerConfig& cfg,
                            const RopeEncoder* rope, const std::type_identity_t<Tensor<T>>* position_table,
                            const ForwardMode& mode);

/// H [B, T, N, D] -> [B, T, N, D]: time layer per band, then band layer per frame.
template <typename T>
Tensor<T> hierarchical_block(const Tensor<T>& h, const BlockParams<T>& block,
                             const RoformerConfig& cfg, const RoformerParams<T>& shared,
                             const RopeEncoders& encoders, const ForwardMode& mode);

template <typename T>
Tensor<T> transformer_stack(const Tensor<T>& h, const RoformerParams<T>& params,
                            const RoformerConfig& cfg, const RopeEncoders& encoders,
                            const ForwardMode& mode);

}  // namespace bsr
