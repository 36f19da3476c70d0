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

#include "bsr/roformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bsr/errors.hpp"
#include "bsr/ops.hpp"

namespace bsr {

namespace {

// Upper bound on attention logits materialised at once; sequences in a batch
// are processed in groups below it.
constexpr std::size_t kLogitBudget = std::size_t{1} << 24;

std::vector<std::size_t> iota_positions(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return p;
}

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads, const RopeEncoder* rope,
                      std::span<const std::size_t> positions) {
  const std::size_t s = x.dim(0), seq = x.dim(1), d = x.dim(2);
  auto y = ops::reshape(x, {s, seq, heads, d / heads});
  if (rope != nullptr) y = ops::rope_rotate(y, *rope, 1, positions);
  return ops::permute(y, {0, 2, 1, 3});
}

template <typename T>
Tensor<T> attend(const Tensor<T>& x, const AttentionParams<T>& p, std::size_t heads,
                 const RopeEncoder* rope, double dropout, const ForwardMode& mode) {
  const std::size_t s = x.dim(0), seq = x.dim(1), d = x.dim(2);
  const auto positions = iota_positions(seq);
  auto q = split_heads(linear(x, p.q), heads, rope, positions);
  auto k = split_heads(linear(x, p.k), heads, rope, positions);
  auto v = split_heads(linear(x, p.v), heads, nullptr, positions);
  const T scale = T(1) / std::sqrt(static_cast<T>(d / heads));
  auto logits = ops::mul_scalar(ops::matmul(q, ops::permute(k, {0, 1, 3, 2})), scale);
  auto weights = ops::dropout(ops::softmax(logits, -1), dropout, mode.training, mode.rng);
  auto mixed = ops::permute(ops::matmul(weights, v), {0, 2, 1, 3});
  return ops::reshape(mixed, {s, seq, d});
}

}  // namespace

std::string to_string(PositionalVariant v) {
  return v == PositionalVariant::rope ? "rope" : "learned_absolute";
}

PositionalVariant parse_positional_variant(const std::string& text) {
  if (text == "rope") return PositionalVariant::rope;
  if (text == "learned_absolute" || text == "absolute") return PositionalVariant::learned_absolute;
  throw ConfigError("unknown positional variant '" + text + "' (expected rope or learned_absolute)");
}

void RoformerConfig::validate() const {
  if (dim == 0 || heads == 0 || depth == 0) throw ConfigError("dim, heads and depth must be positive");
  if (dim % heads != 0) {
    throw ConfigError("dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (positional == PositionalVariant::rope && head_dim() % 2 != 0) {
    throw ConfigError("rotary encoding needs an even head dimension, got " + std::to_string(head_dim()));
  }
  for (double rate : {attn_dropout, ff_dropout}) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  }
  if (max_time == 0 || max_bands == 0) throw ConfigError("max_time and max_bands must be positive");
  if (!(rope_base > 1.0)) throw ConfigError("rope base must exceed 1");
}

RopeEncoders make_rope_encoders(const RoformerConfig& cfg) {
  cfg.validate();
  // The absolute variant never rotates; its head size may be odd.
  const std::size_t hd = cfg.positional == PositionalVariant::rope ? cfg.head_dim() : 2;
  return {RopeEncoder(hd, cfg.max_time, cfg.rope_base), RopeEncoder(hd, cfg.max_bands, cfg.rope_base)};
}

std::size_t attention_param_count(std::size_t dim) { return dim + 4 * (dim * dim + dim); }

std::size_t feedforward_param_count(std::size_t dim) {
  return dim + (dim * 4 * dim + 4 * dim) + (4 * dim * dim + dim);
}

std::size_t layer_param_count(std::size_t dim) {
  return attention_param_count(dim) + feedforward_param_count(dim);
}

std::size_t roformer_param_count(const RoformerConfig& cfg) {
  std::size_t total = cfg.depth * 2 * layer_param_count(cfg.dim);
  if (cfg.positional == PositionalVariant::learned_absolute) {
    total += (cfg.max_time + cfg.max_bands) * cfg.dim;
  }
  return total;
}

template <typename T>
LayerParams<T> init_layer(std::size_t dim, Rng& rng) {
  LayerParams<T> p;
  p.attn.norm = init_norm_scale<T>(dim);
  p.attn.q = init_linear<T>(dim, dim, rng);
  p.attn.k = init_linear<T>(dim, dim, rng);
  p.attn.v = init_linear<T>(dim, dim, rng);
  p.attn.out = init_linear<T>(dim, dim, rng);
  p.ff.norm = init_norm_scale<T>(dim);
  p.ff.up = init_linear<T>(dim, 4 * dim, rng);
  p.ff.down = init_linear<T>(4 * dim, dim, rng);
  return p;
}

template <typename T>
RoformerParams<T> init_roformer(const RoformerConfig& cfg, Rng& rng) {
  cfg.validate();
  RoformerParams<T> params;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    auto time = init_layer<T>(cfg.dim, rng);
    auto band = init_layer<T>(cfg.dim, rng);
    params.blocks.push_back({std::move(time), std::move(band)});
  }
  if (cfg.positional == PositionalVariant::learned_absolute) {
    std::normal_distribution<double> normal(0.0, 0.02);
    auto table = [&](std::size_t rows) {
      std::vector<T> v(rows * cfg.dim);
      for (auto& x : v) x = static_cast<T>(normal(rng));
      return Tensor<T>({rows, cfg.dim}, std::move(v), true);
    };
    params.pos_time = table(cfg.max_time);
    params.pos_band = table(cfg.max_bands);
  }
  return params;
}

template <typename T>
void append_params(const RoformerParams<T>& params, NamedParams<T>& out) {
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    for (const char* axis : {"time", "band"}) {
      const auto& layer = std::string(axis) == "time" ? params.blocks[l].time : params.blocks[l].band;
      const std::string attn = "blocks." + std::to_string(l) + "." + axis + ".attn.";
      const std::string ff = "blocks." + std::to_string(l) + "." + axis + ".ff.";
      out.emplace_back(attn + "norm", layer.attn.norm);
      append_params(layer.attn.q, attn + "wq", attn + "bq", out);
      append_params(layer.attn.k, attn + "wk", attn + "bk", out);
      append_params(layer.attn.v, attn + "wv", attn + "bv", out);
      append_params(layer.attn.out, attn + "wo", attn + "bo", out);
      out.emplace_back(ff + "norm", layer.ff.norm);
      append_params(layer.ff.up, ff + "w1", ff + "b1", out);
      append_params(layer.ff.down, ff + "w2", ff + "b2", out);
    }
  }
  if (params.pos_time.defined()) out.emplace_back("pos.time", params.pos_time);
  if (params.pos_band.defined()) out.emplace_back("pos.band", params.pos_band);
}

template <typename T>
Tensor<T> attention(const Tensor<T>& h, const AttentionParams<T>& p, std::size_t heads,
                    const RopeEncoder* rope, const std::type_identity_t<Tensor<T>>* position_table, double dropout,
                    const ForwardMode& mode) {
  if (h.rank() != 3) throw DimensionError("attention expects [S, seq, D], got " + to_string(h.shape()));
  const std::size_t s = h.dim(0), seq = h.dim(1), d = h.dim(2);
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("model width " + std::to_string(d) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  auto x = rmsnorm(h, p.norm);
  if (position_table != nullptr) {
    if (position_table->dim(0) < seq) {
      throw DimensionError("sequence of length " + std::to_string(seq) +
                           " exceeds the positional table of " +
                           std::to_string(position_table->dim(0)) + " rows");
    }
    x = ops::add(x, ops::slice(*position_table, 0, 0, seq));
  }
  const std::size_t per_item = heads * seq * seq;
  const std::size_t group = std::max<std::size_t>(1, kLogitBudget / per_item);
  Tensor<T> mixed;
  if (group >= s) {
    mixed = attend(x, p, heads, rope, dropout, mode);
  } else {
    std::vector<Tensor<T>> parts;
    for (std::size_t start = 0; start < s; start += group) {
      const std::size_t len = std::min(group, s - start);
      parts.push_back(attend(ops::slice(x, 0, start, len), p, heads, rope, dropout, mode));
    }
    mixed = ops::concat(parts, 0);
  }
  auto projected = ops::dropout(linear(mixed, p.out), dropout, mode.training, mode.rng);
  return ops::add(h, projected);
}

template <typename T>
Tensor<T> feedforward(const Tensor<T>& h, const FeedForwardParams<T>& p, double dropout,
                      const ForwardMode& mode) {
  auto x = ops::gelu(linear(rmsnorm(h, p.norm), p.up));
  x = ops::dropout(x, dropout, mode.training, mode.rng);
  x = ops::dropout(linear(x, p.down), dropout, mode.training, mode.rng);
  return ops::add(h, x);
}

template <typename T>
Tensor<T> transformer_layer(const Tensor<T>& h, const LayerParams<T>& p, const RoformerConfig& cfg,
                            const RopeEncoder* rope, const std::type_identity_t<Tensor<T>>* position_table,
                            const ForwardMode& mode) {
  auto x = attention(h, p.attn, cfg.heads, rope, position_table, cfg.attn_dropout, mode);
  return feedforward(x, p.ff, cfg.ff_dropout, mode);
}

template <typename T>
Tensor<T> hierarchical_block(const Tensor<T>& h, const BlockParams<T>& block,
                             const RoformerConfig& cfg, const RoformerParams<T>& shared,
                             const RopeEncoders& encoders, const ForwardMode& mode) {
  if (h.rank() != 4) throw DimensionError("block expects [B, T, N, D], got " + to_string(h.shape()));
  const std::size_t b = h.dim(0), t = h.dim(1), n = h.dim(2), d = h.dim(3);
  if (d != cfg.dim) {
    throw DimensionError("block width " + std::to_string(cfg.dim) + " does not match input " +
                         to_string(h.shape()));
  }
  const bool rope = cfg.positional == PositionalVariant::rope;
  const Tensor<T>* time_table = rope ? nullptr : &shared.pos_time;
  const Tensor<T>* band_table = rope ? nullptr : &shared.pos_band;
  if (!rope && (!shared.pos_time.defined() || !shared.pos_band.defined())) {
    throw ConfigError("absolute positional variant without embedding tables");
  }

  // Along time: [B, T, N, D] -> [B, N, T, D] -> [(B N), T, D]
  auto x = ops::reshape(ops::permute(h, {0, 2, 1, 3}), {b * n, t, d});
  x = transformer_layer(x, block.time, cfg, rope ? &encoders.time : nullptr, time_table, mode);
  // Along bands: -> [B, N, T, D] -> [B, T, N, D] -> [(B T), N, D]
  x = ops::permute(ops::reshape(x, {b, n, t, d}), {0, 2, 1, 3});
  x = ops::reshape(x, {b * t, n, d});
  x = transformer_layer(x, block.band, cfg, rope ? &encoders.band : nullptr, band_table, mode);
  return ops::reshape(x, {b, t, n, d});
}

template <typename T>
Tensor<T> transformer_stack(const Tensor<T>& h, const RoformerParams<T>& params,
                            const RoformerConfig& cfg, const RopeEncoders& encoders,
                            const ForwardMode& mode) {
  if (params.blocks.empty()) throw ConfigError("transformer stack needs at least one block");
  Tensor<T> x = h;
  for (const auto& block : params.blocks) {
    x = hierarchical_block(x, block, cfg, params, encoders, mode);
  }
  return x;
}

#define BSR_INSTANTIATE_ROFORMER(T)                                                             \
  template LayerParams<T> init_layer<T>(std::size_t, Rng&);                                     \
  template RoformerParams<T> init_roformer<T>(const RoformerConfig&, Rng&);                     \
  template void append_params(const RoformerParams<T>&, NamedParams<T>&);                       \
  template Tensor<T> attention(const Tensor<T>&, const AttentionParams<T>&, std::size_t,        \
                               const RopeEncoder*, const Tensor<T>*, double, const ForwardMode&); \
  template Tensor<T> feedforward(const Tensor<T>&, const FeedForwardParams<T>&, double,         \
                                 const ForwardMode&);                                           \
  template Tensor<T> transformer_layer(const Tensor<T>&, const LayerParams<T>&,                 \
                                       const RoformerConfig&, const RopeEncoder*,               \
                                       const Tensor<T>*, const ForwardMode&);                   \
  template Tensor<T> hierarchical_block(const Tensor<T>&, const BlockParams<T>&,                \
                                        const RoformerConfig&, const RoformerParams<T>&,        \
                                        const RopeEncoders&, const ForwardMode&);               \
  template Tensor<T> transformer_stack(const Tensor<T>&, const RoformerParams<T>&,              \
                                       const RoformerConfig&, const RopeEncoders&,              \
                                       const ForwardMode&);

BSR_INSTANTIATE_ROFORMER(float)
BSR_INSTANTIATE_ROFORMER(double)
#undef BSR_INSTANTIATE_ROFORMER

}  // namespace bsr
