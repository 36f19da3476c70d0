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

// Checkpoint container.
//
// Layout, all integers little-endian:
//   "BSRFCKPT"  u32 version (1)  u32 stem count (1)
//   str stem  u64 step  str config text
//   u32 section count, then per section: str name, u32 tensor count, and per
//   tensor: str name, u32 rank, u64 dims[rank], f32 data[prod(dims)]
//   u32 CRC-32 of every preceding byte
// where str is a u32 byte length followed by the bytes. Sections are
// "params" (raw weights) and optionally "ema" (averaged weights).

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "bsr/config.hpp"
#include "bsr/layers.hpp"
#include "bsr/model.hpp"

namespace bsr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string stem;
  std::uint64_t step = 0;
  RunConfig config;
  NamedParams<float> params;
  NamedParams<float> ema;  // empty when absent
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws DataError on bad magic, version, truncation or checksum.
Checkpoint decode_checkpoint(std::string_view bytes);

/// Writes via a temporary file and rename. IoError when the path is not writable.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// IoError when unreadable, DataError when corrupt.
Checkpoint load_checkpoint(const std::string& path);

/// Snapshot of a model's weights (copied) with optional EMA weights.
Checkpoint make_checkpoint(const StemModel<float>& model, const RunConfig& config, std::uint64_t step,
                           const NamedParams<float>* ema = nullptr);

/// Rebuilds the model described by the embedded config and loads the EMA
/// weights when present and requested, the raw weights otherwise. Shapes are
/// cross-checked against the config; disagreement is a DataError.
StemModel<float> model_from_checkpoint(const Checkpoint& ckpt, bool prefer_ema = true);

}  // namespace bsr
