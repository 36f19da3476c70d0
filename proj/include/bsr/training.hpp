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

// Training: multi-resolution L1 objective, segment pool with random-mixing
// augmentation, AdamW with step decay, parameter EMA and the training loop.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bsr/config.hpp"
#include "bsr/dsp.hpp"
#include "bsr/model.hpp"
#include "bsr/rng.hpp"
#include "bsr/tensor.hpp"

namespace bsr {

struct LossConfig {
  std::vector<std::size_t> windows{4096, 2048, 1024, 512, 256};
  std::size_t hop = 147;

  static LossConfig from(const TrainConfig& cfg) { return {cfg.loss_windows, cfg.loss_hop}; }
};

template <typename T>
struct LossTerms {
  Tensor<T> total;  // scalar, differentiable
  double time = 0;
  std::vector<double> spectral;  // one per window
};

/// mean|yhat - y| plus, per window, the mean over complex STFT entries of
/// |re| + |im| of the difference spectrogram. Inputs share any shape whose
/// last axis is time.
template <typename T>
LossTerms<T> separation_loss(const Tensor<T>& target, const Tensor<T>& estimate, const LossConfig& cfg);

double separation_loss(const Waveform& target, const Waveform& estimate, const LossConfig& cfg);

/// 20 log10 of the RMS over all channels; -infinity for digital silence.
double loudness_db(const Waveform& segment);

/// One song: vocals, bass, drums, other.
struct Song {
  std::string name;
  std::array<Waveform, 4> stems;

  Waveform mixture() const;
};

/// Per-stem FIFO of fixed-length segments. All access goes through one lock.
class SegmentPool {
 public:
  explicit SegmentPool(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t size(std::size_t stem) const;
  /// Appends, evicting the oldest segment when full.
  void push(std::size_t stem, Waveform segment);
  /// Copy of a uniformly drawn segment; DataError when the queue is empty.
  Waveform sample(std::size_t stem, Rng& rng) const;
  /// Copy of the segment at FIFO position i (0 = oldest).
  Waveform at(std::size_t stem, std::size_t i) const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::array<std::deque<Waveform>, 4> queues_;
};

struct CropConfig {
  std::size_t segment = 0;
  double gate_db = -50.0;
  std::size_t retries = 10;
};

/// Crops one random segment per stem and pushes those louder than the gate;
/// quiet crops are redrawn up to `retries` times. Returns how many were pushed.
std::size_t pool_update(SegmentPool& pool, const Song& song, const CropConfig& cfg, Rng& rng);

struct AugmentConfig {
  double gain_db = 3.0;
  double silence_prob = 0.1;
};

struct Batch {
  Tensor<float> mixture;              // [B, C, S]
  std::array<Tensor<float>, 4> stems; // [B, C, S] each
  std::size_t silenced = 0;           // stems replaced by silence
};

/// Independent draws per stem, random gain in dB, random silencing, sum.
Batch sample_batch(const SegmentPool& pool, std::size_t batch, const AugmentConfig& cfg, Rng& rng);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

class AdamW {
 public:
  AdamW(NamedParams<float> params, AdamWConfig cfg);

  /// One update from the accumulated gradients (missing gradients count as 0).
  void step(double lr);
  void zero_grad();
  std::uint64_t steps() const { return steps_; }

 private:
  NamedParams<float> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  std::uint64_t steps_ = 0;
};

/// base * decay^floor(step / every).
double lr_at(std::uint64_t step, double base = 5e-4, double decay = 0.9, std::uint64_t every = 40000);

/// Exponential moving average of a parameter set.
class Ema {
 public:
  Ema(const NamedParams<float>& params, double decay);

  /// shadow <- decay * shadow + (1 - decay) * params.
  void update(const NamedParams<float>& params);
  const NamedParams<float>& shadow() const { return shadow_; }
  double decay() const { return decay_; }

 private:
  NamedParams<float> shadow_;
  double decay_;
};

struct StepRecord {
  std::uint64_t step = 0;
  double lr = 0;
  double loss = 0;
  double time = 0;
  std::vector<double> spectral;
  std::optional<double> valid_sdr;
};

struct TrainOptions {
  std::size_t steps = 0;
  std::string out_dir;          // empty: no files written
  std::ostream* log = nullptr;  // JSON lines
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  StemModel<float> model;
  NamedParams<float> ema;
  std::vector<StepRecord> history;
  std::optional<double> best_sdr;
};

/// Trains one stem model. Step k draws all of its randomness from
/// derive_rng(seed, k), so runs are reproducible bit for bit.
TrainResult train(const RunConfig& config, const std::vector<Song>& train_songs,
                  const std::vector<Song>& valid_songs, const TrainOptions& options);

/// Median over songs of the chunked median SDR of the model's stem.
double validate(const StemModel<float>& model, const std::vector<Song>& songs, DeframeMode mode);

std::string to_json(const StepRecord& record);

}  // namespace bsr
