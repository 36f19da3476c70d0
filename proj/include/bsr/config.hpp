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

// Run configuration: model shape, STFT, segmenting and training settings,
// stored as plain `key = value` text. The same text is embedded in every
// checkpoint.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bsr/bandsplit.hpp"
#include "bsr/roformer.hpp"
#include "bsr/stft.hpp"

namespace bsr {

/// Stem taxonomy; the last one is always derived as the residual.
inline const std::array<std::string, 4> kStemNames = {"vocals", "bass", "drums", "other"};
std::size_t stem_index(const std::string& name);

enum class DeframeMode { tc, oa };
std::string to_string(DeframeMode mode);
DeframeMode parse_deframe_mode(const std::string& text);

struct ModelConfig {
  int sample_rate = 44100;
  std::size_t channels = 2;
  StftConfig stft{2048, 441, true};
  BandScheme bands;  // empty means derive from the frequency rules
  std::size_t dim = 384;
  std::size_t depth = 12;
  std::size_t heads = 8;
  double attn_dropout = 0.1;
  double ff_dropout = 0.1;
  PositionalVariant positional = PositionalVariant::rope;
  double rope_base = 10000.0;
  DeframeMode deframe = DeframeMode::oa;
  double segment_seconds = 8.0;
  double hop_seconds = 4.0;

  std::size_t segment_samples() const;
  std::size_t hop_samples() const;
  std::size_t frames() const { return stft.frames(segment_samples()); }
  /// Explicit scheme, or the rule-derived one when `bands` is empty.
  BandScheme band_scheme() const;
  RoformerConfig roformer() const;
  void validate() const;
};

struct TrainConfig {
  std::string target_stem = "vocals";
  std::size_t batch_size = 2;
  double learning_rate = 5e-4;
  double lr_decay = 0.9;
  std::size_t lr_decay_steps = 40000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-2;
  double ema_decay = 0.999;
  std::size_t grad_accum = 1;
  std::size_t pool_capacity = 512;
  double gain_db = 3.0;
  double silence_prob = 0.1;
  double loudness_gate_db = -50.0;
  std::size_t crop_retries = 10;
  std::vector<std::size_t> loss_windows{4096, 2048, 1024, 512, 256};
  std::size_t loss_hop = 147;
  std::size_t validate_every = 1000;
  std::size_t checkpoint_every = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  /// Parses `key = value` lines; `#` starts a comment. Unknown or repeated
  /// keys and malformed values throw ConfigError naming the line.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  /// Every key, with the band scheme written out explicitly.
  std::string serialize() const;
  void validate() const;
};

/// Full-size separator: D = 384, 12 blocks, 8 heads, 8 s segments.
RunConfig canonical_config();
/// Desk-scale configuration: D = 16, one block, two bands, 0.5 s segments.
RunConfig smoke_config();

}  // namespace bsr
