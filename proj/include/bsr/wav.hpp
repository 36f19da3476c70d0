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

// RIFF/WAVE reading and writing. Integer PCM is scaled symmetrically by
// 2^(bits-1) - 1 so that full scale maps to +-1.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bsr/dsp.hpp"

namespace bsr {

enum class WavFormat { pcm16, pcm24, float32 };

struct WavReadOptions {
  /// Sample rate every file must carry; 0 accepts any rate.
  int required_rate = kDefaultSampleRate;
};

std::vector<std::uint8_t> encode_wav(const Waveform& audio, WavFormat format = WavFormat::float32);
/// Throws DataError for malformed or unsupported files and MismatchError when
/// the sample rate differs from options.required_rate.
Waveform decode_wav(const std::vector<std::uint8_t>& bytes, const WavReadOptions& options = {});

/// IoError if the file cannot be opened; decode errors carry the path.
Waveform read_wav(const std::string& path, const WavReadOptions& options = {});
void write_wav(const std::string& path, const Waveform& audio, WavFormat format = WavFormat::float32);

}  // namespace bsr
