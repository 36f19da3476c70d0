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

#include "bsr/model.hpp"

#include <algorithm>
#include <map>

#include "bsr/errors.hpp"
#include "bsr/ops.hpp"

namespace bsr {

template <typename T>
NamedParams<T> StemModel<T>::named_params() const {
  NamedParams<T> out;
  for (std::size_t n = 0; n < band_split.bands.size(); ++n) {
    const std::string prefix = "band_split." + std::to_string(n) + ".";
    out.emplace_back(prefix + "norm", band_split.bands[n].norm);
    append_params(band_split.bands[n].proj, prefix + "weight", prefix + "bias", out);
  }
  append_params(transformer, out);
  append_params(mask, out);
  return out;
}

template <typename T>
StemModel<T> StemModel<T>::clone() const {
  Rng rng(0);
  auto copy = init_stem_model<T>(config, stem, rng);
  assign_params(copy, named_params());
  return copy;
}

template <typename T>
StemModel<T> init_stem_model(const ModelConfig& config, const std::string& stem, Rng& rng) {
  config.validate();
  stem_index(stem);
  StemModel<T> model;
  model.stem = stem;
  model.config = config;
  model.scheme = config.band_scheme();
  model.band_split = init_band_split<T>(model.scheme, config.channels, config.dim, rng);
  model.transformer = init_roformer<T>(config.roformer(), rng);
  model.mask = init_mask_estimator<T>(model.scheme, config.channels, config.dim, rng);
  return model;
}

template <typename T>
void assign_params(StemModel<T>& model, const NamedParams<T>& source) {
  std::map<std::string, const Tensor<T>*> by_name;
  for (const auto& [name, tensor] : source) {
    if (!by_name.emplace(name, &tensor).second) throw MismatchError("parameter '" + name + "' appears twice");
  }
  auto targets = model.named_params();
  for (auto& [name, tensor] : targets) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw MismatchError("parameter '" + name + "' is missing");
    if (it->second->shape() != tensor.shape()) {
      throw MismatchError("parameter '" + name + "' has shape " + to_string(it->second->shape()) +
                          ", the configuration expects " + to_string(tensor.shape()));
    }
    const auto src = it->second->data();
    std::copy(src.begin(), src.end(), tensor.mutable_data().begin());
    by_name.erase(it);
  }
  if (!by_name.empty()) throw MismatchError("unexpected parameter '" + by_name.begin()->first + "'");
}

template <typename T>
ModelOutput<T> forward(const StemModel<T>& model, const Tensor<T>& mixture, const ForwardMode& mode) {
  const auto& cfg = model.config;
  if (mixture.rank() != 3 || mixture.dim(1) != cfg.channels) {
    throw DimensionError("model expects a mixture [B, " + std::to_string(cfg.channels) + ", L], got " +
                         to_string(mixture.shape()));
  }
  const std::size_t length = mixture.dim(2);
  const auto roformer_cfg = cfg.roformer();
  const auto encoders = make_rope_encoders(roformer_cfg);

  auto spec = ops::stft(mixture, cfg.stft);
  auto h = band_split_forward(spec, model.scheme, model.band_split);
  h = transformer_stack(h, model.transformer, roformer_cfg, encoders, mode);
  auto mask = mask_estimate(h, model.mask, model.scheme, cfg.channels);
  auto masked = ops::complex_mul(mask, spec);
  auto estimate = ops::istft(masked, cfg.stft, length);
  return {estimate, masked, mask};
}

namespace {

// [1, C, T, F, 2] -> C x T x F complex values.
ComplexSpectrogram to_spectrogram(const Tensor<float>& t) {
  ComplexSpectrogram out(t.dim(1), t.dim(2), t.dim(3));
  const auto d = t.data();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = {d[2 * i], d[2 * i + 1]};
  return out;
}

}  // namespace

Tensor<float> to_tensor(const Waveform& w) {
  return Tensor<float>({1, w.channels, w.length}, w.samples);
}

Waveform to_waveform(const Tensor<float>& t, std::size_t item, int sample_rate) {
  if (t.rank() != 3 || item >= t.dim(0)) throw DimensionError("cannot read waveform from " + to_string(t.shape()));
  Waveform w(t.dim(1), t.dim(2), sample_rate);
  const auto d = t.data();
  const std::size_t n = w.samples.size();
  std::copy(d.begin() + static_cast<std::ptrdiff_t>(item * n),
            d.begin() + static_cast<std::ptrdiff_t>((item + 1) * n), w.samples.begin());
  return w;
}

SegmentOutput forward_segment(const StemModel<float>& model, const Waveform& segment,
                              const ForwardMode& mode) {
  const auto& cfg = model.config;
  if (segment.length != cfg.segment_samples()) {
    throw DimensionError("segment has " + std::to_string(segment.length) + " samples, the model expects " +
                         std::to_string(cfg.segment_samples()));
  }
  if (segment.channels != cfg.channels) {
    throw DimensionError("segment has " + std::to_string(segment.channels) + " channels, the model expects " +
                         std::to_string(cfg.channels));
  }
  if (segment.sample_rate != cfg.sample_rate) {
    throw MismatchError("segment sample rate " + std::to_string(segment.sample_rate) +
                        " differs from the model's " + std::to_string(cfg.sample_rate));
  }
  auto out = forward(model, to_tensor(segment), mode);
  return {to_waveform(out.estimate, 0, cfg.sample_rate), to_spectrogram(out.spectrum),
          to_spectrogram(out.mask)};
}

ParamBreakdown param_count(const ModelConfig& config) {
  const auto scheme = config.band_scheme();
  const auto roformer_cfg = config.roformer();
  ParamBreakdown p;
  p.band_split = band_split_param_count(scheme, config.channels, config.dim);
  p.per_block = 2 * layer_param_count(config.dim);
  p.blocks = config.depth * p.per_block;
  p.positional = roformer_param_count(roformer_cfg) - p.blocks;
  p.mask = mask_estimator_param_count(scheme, config.channels, config.dim);
  p.total = p.band_split + p.blocks + p.positional + p.mask;
  return p;
}

#define BSR_INSTANTIATE_MODEL(T)                                                                \
  template struct StemModel<T>;                                                                 \
  template StemModel<T> init_stem_model<T>(const ModelConfig&, const std::string&, Rng&);       \
  template void assign_params(StemModel<T>&, const NamedParams<T>&);                            \
  template ModelOutput<T> forward(const StemModel<T>&, const Tensor<T>&, const ForwardMode&);

BSR_INSTANTIATE_MODEL(float)
BSR_INSTANTIATE_MODEL(double)
#undef BSR_INSTANTIATE_MODEL

}  // namespace bsr
