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

// One separation model per stem: STFT, band split, hierarchical transformer,
// mask estimation, masking and inverse STFT.

#pragma once

#include <cstddef>
#include <string>

#include "bsr/bandsplit.hpp"
#include "bsr/config.hpp"
#include "bsr/dsp.hpp"
#include "bsr/mask.hpp"
#include "bsr/roformer.hpp"
#include "bsr/tensor.hpp"

namespace bsr {

template <typename T>
struct StemModel {
  std::string stem;
  ModelConfig config;
  BandScheme scheme;
  BandSplitParams<T> band_split;
  RoformerParams<T> transformer;
  MaskEstimatorParams<T> mask;

  /// Every trainable tensor with its checkpoint name, in a fixed order.
  NamedParams<T> named_params() const;
  /// Deep copy with independent parameter storage.
  StemModel clone() const;
};

template <typename T>
StemModel<T> init_stem_model(const ModelConfig& config, const std::string& stem, Rng& rng);

/// Copies `source` into the model's tensors by name. Every model parameter
/// must be present with the same shape; extra names are errors too.
template <typename T>
void assign_params(StemModel<T>& model, const NamedParams<T>& source);

template <typename T>
struct ModelOutput {
  Tensor<T> estimate;  // [B, C, L]
  Tensor<T> spectrum;  // masked spectrogram [B, C, T, F, 2]
  Tensor<T> mask;      // [B, C, T, F, 2]
};

/// mixture [B, C, L] -> estimate of the model's stem, same shape.
template <typename T>
ModelOutput<T> forward(const StemModel<T>& model, const Tensor<T>& mixture, const ForwardMode& mode);

struct SegmentOutput {
  Waveform estimate;
  ComplexSpectrogram spectrum;
  ComplexSpectrogram mask;
};

/// Runs one segment of exactly config.segment_samples() samples.
SegmentOutput forward_segment(const StemModel<float>& model, const Waveform& segment,
                              const ForwardMode& mode = {});

struct ParamBreakdown {
  std::size_t band_split = 0;
  std::size_t per_block = 0;
  std::size_t blocks = 0;  // all transformer blocks
  std::size_t positional = 0;
  std::size_t mask = 0;
  std::size_t total = 0;
};

ParamBreakdown param_count(const ModelConfig& config);

/// Mixture tensor [1, C, L] from a waveform, and back.
Tensor<float> to_tensor(const Waveform& w);
Waveform to_waveform(const Tensor<float>& t, std::size_t item, int sample_rate);

}  // namespace bsr
