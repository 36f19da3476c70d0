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

#include "bsr/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bsr/checkpoint.hpp"
#include "bsr/errors.hpp"
#include "bsr/ops.hpp"
#include "bsr/segments.hpp"

namespace bsr {

namespace {

// Streams reserved for model initialisation and the initial pool fill; step k
// uses stream k.
constexpr std::uint64_t kInitStream = ~std::uint64_t{0};
constexpr std::uint64_t kFillStream = ~std::uint64_t{0} - 1;

Tensor<float> stack(const std::vector<Waveform>& items) {
  const auto& first = items.front();
  std::vector<float> data;
  data.reserve(items.size() * first.samples.size());
  for (const auto& w : items) data.insert(data.end(), w.samples.begin(), w.samples.end());
  return Tensor<float>({items.size(), first.channels, first.length}, std::move(data));
}

std::string checkpoint_name(std::uint64_t step) {
  std::ostringstream name;
  name << "step_" << std::setw(7) << std::setfill('0') << step << ".ckpt";
  return name.str();
}

void check_songs(const std::vector<Song>& songs, const ModelConfig& cfg, const char* what) {
  for (const auto& song : songs) {
    for (std::size_t s = 0; s < 4; ++s) {
      const auto& w = song.stems[s];
      if (w.channels != cfg.channels || w.sample_rate != cfg.sample_rate) {
        throw DataError(std::string(what) + " song '" + song.name + "' stem " + kStemNames[s] + " has " +
                        std::to_string(w.channels) + " channels at " + std::to_string(w.sample_rate) +
                        " Hz; the model expects " + std::to_string(cfg.channels) + " at " +
                        std::to_string(cfg.sample_rate));
      }
      if (w.length != song.stems[0].length) {
        throw DataError(std::string(what) + " song '" + song.name + "' has stems of different lengths");
      }
    }
    if (song.stems[0].length < cfg.segment_samples()) {
      throw DataError(std::string(what) + " song '" + song.name + "' is shorter than one segment");
    }
  }
}

}  // namespace

template <typename T>
LossTerms<T> separation_loss(const Tensor<T>& target, const Tensor<T>& estimate, const LossConfig& cfg) {
  if (target.shape() != estimate.shape()) {
    throw DimensionError("loss inputs differ in shape: " + to_string(target.shape()) + " vs " +
                         to_string(estimate.shape()));
  }
  if (cfg.hop == 0 || cfg.windows.empty()) throw ConfigError("loss needs a positive hop and at least one window");
  LossTerms<T> terms;
  const auto diff = ops::sub(estimate, target);
  auto total = ops::mean(ops::abs(diff));
  terms.time = static_cast<double>(total.item());
  for (std::size_t w : cfg.windows) {
    auto spec = ops::stft(diff, StftConfig{w, cfg.hop, true});
    // Mean over complex entries of |re| + |im|.
    auto term = ops::mul_scalar(ops::sum(ops::abs(spec)), T(2) / static_cast<T>(spec.numel()));
    terms.spectral.push_back(static_cast<double>(term.item()));
    total = ops::add(total, term);
  }
  terms.total = total;
  return terms;
}

double separation_loss(const Waveform& target, const Waveform& estimate, const LossConfig& cfg) {
  if (target.channels != estimate.channels || target.length != estimate.length) {
    throw DimensionError("loss inputs differ in length or channel count");
  }
  return static_cast<double>(separation_loss(to_tensor(target), to_tensor(estimate), cfg).total.item());
}

double loudness_db(const Waveform& segment) {
  if (segment.empty()) throw DimensionError("loudness of an empty segment");
  double energy = 0;
  for (float v : segment.samples) energy += static_cast<double>(v) * v;
  if (energy == 0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(energy / static_cast<double>(segment.samples.size()));
}

Waveform Song::mixture() const {
  Waveform mix = stems[0];
  for (std::size_t s = 1; s < 4; ++s) {
    if (stems[s].samples.size() != mix.samples.size()) throw DimensionError("song '" + name + "' stems differ in size");
    for (std::size_t i = 0; i < mix.samples.size(); ++i) mix.samples[i] += stems[s].samples[i];
  }
  return mix;
}

SegmentPool::SegmentPool(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("segment pool capacity must be positive");
}

std::size_t SegmentPool::size(std::size_t stem) const {
  std::lock_guard lock(mutex_);
  return queues_.at(stem).size();
}

void SegmentPool::push(std::size_t stem, Waveform segment) {
  std::lock_guard lock(mutex_);
  auto& q = queues_.at(stem);
  if (q.size() == capacity_) q.pop_front();
  q.push_back(std::move(segment));
}

Waveform SegmentPool::sample(std::size_t stem, Rng& rng) const {
  std::lock_guard lock(mutex_);
  const auto& q = queues_.at(stem);
  if (q.empty()) throw DataError("segment pool has no " + kStemNames.at(stem) + " segments");
  std::uniform_int_distribution<std::size_t> pick(0, q.size() - 1);
  return q[pick(rng)];
}

Waveform SegmentPool::at(std::size_t stem, std::size_t i) const {
  std::lock_guard lock(mutex_);
  return queues_.at(stem).at(i);
}

std::size_t pool_update(SegmentPool& pool, const Song& song, const CropConfig& cfg, Rng& rng) {
  const std::size_t length = song.stems[0].length;
  if (cfg.segment == 0 || length < cfg.segment) {
    throw DataError("song '" + song.name + "' (" + std::to_string(length) + " samples) is shorter than a " +
                    std::to_string(cfg.segment) + "-sample segment");
  }
  std::uniform_int_distribution<std::size_t> offset(0, length - cfg.segment);
  std::size_t pushed = 0;
  for (std::size_t s = 0; s < 4; ++s) {
    const auto& stem = song.stems[s];
    for (std::size_t attempt = 0; attempt <= cfg.retries; ++attempt) {
      const std::size_t start = offset(rng);
      Waveform crop(stem.channels, cfg.segment, stem.sample_rate);
      for (std::size_t c = 0; c < stem.channels; ++c) {
        std::copy_n(stem.channel(c).begin() + static_cast<std::ptrdiff_t>(start), cfg.segment,
                    crop.channel(c).begin());
      }
      if (loudness_db(crop) > cfg.gate_db) {
        pool.push(s, std::move(crop));
        ++pushed;
        break;
      }
    }
  }
  return pushed;
}

Batch sample_batch(const SegmentPool& pool, std::size_t batch, const AugmentConfig& cfg, Rng& rng) {
  if (batch == 0) throw ConfigError("batch size must be positive");
  std::uniform_real_distribution<double> gain(-cfg.gain_db, cfg.gain_db);
  std::bernoulli_distribution silence(cfg.silence_prob);
  std::array<std::vector<Waveform>, 4> stems;
  std::vector<Waveform> mixtures;
  std::size_t silenced = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    Waveform mix;
    for (std::size_t s = 0; s < 4; ++s) {
      Waveform w = pool.sample(s, rng);
      const auto factor = static_cast<float>(std::pow(10.0, gain(rng) / 20.0));
      const bool mute = silence(rng);
      silenced += mute;
      for (auto& v : w.samples) v = mute ? 0.0f : v * factor;
      if (s == 0) {
        mix = w;
      } else {
        for (std::size_t i = 0; i < mix.samples.size(); ++i) mix.samples[i] += w.samples[i];
      }
      stems[s].push_back(std::move(w));
    }
    mixtures.push_back(std::move(mix));
  }
  Batch out;
  out.mixture = stack(mixtures);
  for (std::size_t s = 0; s < 4; ++s) out.stems[s] = stack(stems[s]);
  out.silenced = silenced;
  return out;
}

AdamW::AdamW(NamedParams<float> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.numel(), 0.0f);
    v_.emplace_back(t.numel(), 0.0f);
  }
}

void AdamW::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void AdamW::step(double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  const double shrink = 1.0 - lr * cfg_.weight_decay;
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto& t = params_[p].second;
    auto data = t.mutable_data();
    const auto grad = t.grad();
    if (!grad.empty() && grad.size() != data.size()) {
      throw DimensionError("gradient of '" + params_[p].first + "' has the wrong size");
    }
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
      const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = (mi / c1) / (std::sqrt(vi / c2) + cfg_.eps);
      data[i] = static_cast<float>(static_cast<double>(data[i]) * shrink - lr * update);
    }
  }
}

double lr_at(std::uint64_t step, double base, double decay, std::uint64_t every) {
  if (every == 0) throw ConfigError("learning-rate decay interval must be positive");
  return base * std::pow(decay, static_cast<double>(step / every));
}

Ema::Ema(const NamedParams<float>& params, double decay) : decay_(decay) {
  if (!(decay >= 0 && decay <= 1)) throw ConfigError("EMA decay must lie in [0, 1]");
  for (const auto& [name, t] : params) shadow_.emplace_back(name, t.detach());
}

void Ema::update(const NamedParams<float>& params) {
  if (params.size() != shadow_.size()) throw DimensionError("EMA update with a different parameter set");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].second.shape() != shadow_[p].second.shape()) {
      throw DimensionError("EMA shape mismatch for '" + params[p].first + "'");
    }
    auto dst = shadow_[p].second.mutable_data();
    const auto src = params[p].second.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = static_cast<float>(decay_ * dst[i] + (1.0 - decay_) * src[i]);
    }
  }
}

std::string to_json(const StepRecord& record) {
  nlohmann::json j;
  j["step"] = record.step;
  j["lr"] = record.lr;
  j["loss"] = record.loss;
  j["time"] = record.time;
  j["spectral"] = record.spectral;
  if (record.valid_sdr) j["valid_sdr"] = *record.valid_sdr;
  return j.dump();
}

double validate(const StemModel<float>& model, const std::vector<Song>& songs, DeframeMode mode) {
  if (songs.empty()) throw DataError("no validation songs");
  const std::size_t target = stem_index(model.stem);
  std::vector<double> scores;
  for (const auto& song : songs) {
    auto estimate = separate_track(model, song.mixture(), mode);
    scores.push_back(chunked_median_sdr(song.stems[target], estimate));
  }
  return median(scores);
}

TrainResult train(const RunConfig& config, const std::vector<Song>& train_songs,
                  const std::vector<Song>& valid_songs, const TrainOptions& options) {
  config.validate();
  const auto& mc = config.model;
  const auto& tc = config.train;
  if (train_songs.empty()) throw DataError("no training songs");
  check_songs(train_songs, mc, "training");
  check_songs(valid_songs, mc, "validation");
  const std::size_t target = stem_index(tc.target_stem);

  std::ofstream log_file;
  if (!options.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    log_file.open(std::filesystem::path(options.out_dir) / "train.jsonl", std::ios::trunc);
    if (!log_file) throw IoError("cannot write to " + options.out_dir);
  }
  auto save = [&](const StemModel<float>& model, const Ema& ema, std::uint64_t step, const std::string& name) {
    if (options.out_dir.empty()) return;
    save_checkpoint((std::filesystem::path(options.out_dir) / name).string(),
                    make_checkpoint(model, config, step, &ema.shadow()));
  };

  Rng init_rng = derive_rng(tc.seed, kInitStream);
  TrainResult result{init_stem_model<float>(mc, tc.target_stem, init_rng), {}, {}, std::nullopt};
  auto& model = result.model;
  const auto params = model.named_params();
  AdamW optimizer(params, {tc.adam_beta1, tc.adam_beta2, tc.adam_eps, tc.weight_decay});
  Ema ema(params, tc.ema_decay);

  SegmentPool pool(tc.pool_capacity);
  const CropConfig crop{mc.segment_samples(), tc.loudness_gate_db, tc.crop_retries};
  const AugmentConfig augment{tc.gain_db, tc.silence_prob};
  const LossConfig loss_cfg = LossConfig::from(tc);
  {
    Rng fill = derive_rng(tc.seed, kFillStream);
    for (const auto& song : train_songs) pool_update(pool, song, crop, fill);
    for (std::size_t s = 0; s < 4; ++s) {
      if (pool.size(s) == 0) {
        throw DataError("no " + kStemNames[s] + " segment of any training song passes the " +
                        std::to_string(tc.loudness_gate_db) + " dB loudness gate");
      }
    }
  }

  std::uniform_int_distribution<std::size_t> pick_song(0, train_songs.size() - 1);
  for (std::uint64_t step = 0; step < options.steps; ++step) {
    Rng rng = derive_rng(tc.seed, step);
    StepRecord record;
    record.step = step + 1;
    record.lr = lr_at(step, tc.learning_rate, tc.lr_decay, tc.lr_decay_steps);
    record.spectral.assign(loss_cfg.windows.size(), 0.0);
    try {
      pool_update(pool, train_songs[pick_song(rng)], crop, rng);
      optimizer.zero_grad();
      for (std::size_t micro = 0; micro < tc.grad_accum; ++micro) {
        auto batch = sample_batch(pool, tc.batch_size, augment, rng);
        Tape<float> tape;
        auto recording = tape.record();
        auto out = forward(model, batch.mixture, {true, &rng});
        auto terms = separation_loss(batch.stems[target], out.estimate, loss_cfg);
        const double scale = 1.0 / static_cast<double>(tc.grad_accum);
        if (!std::isfinite(terms.total.item())) throw NumericalError("loss is not finite");
        tape.backward(ops::mul_scalar(terms.total, static_cast<float>(scale)));
        record.loss += scale * terms.total.item();
        record.time += scale * terms.time;
        for (std::size_t r = 0; r < terms.spectral.size(); ++r) record.spectral[r] += scale * terms.spectral[r];
      }
      optimizer.step(record.lr);
    } catch (const NumericalError& e) {
      throw NumericalError("training diverged at step " + std::to_string(step + 1) + " (seed " +
                           std::to_string(tc.seed) + ", batch stream " + std::to_string(step) +
                           "): " + e.what());
    }
    ema.update(params);

    const bool last = step + 1 == options.steps;
    if (!valid_songs.empty() && ((step + 1) % tc.validate_every == 0 || last)) {
      auto averaged = model.clone();
      assign_params(averaged, ema.shadow());
      record.valid_sdr = validate(averaged, valid_songs, mc.deframe);
      if (!result.best_sdr || *record.valid_sdr > *result.best_sdr) {
        result.best_sdr = record.valid_sdr;
        save(model, ema, step + 1, "best.ckpt");
      }
    }
    if ((step + 1) % tc.checkpoint_every == 0) save(model, ema, step + 1, checkpoint_name(step + 1));

    const std::string line = to_json(record);
    if (options.log != nullptr) *options.log << line << "\n";
    if (log_file.is_open()) log_file << line << "\n";
    if (options.on_step) options.on_step(record);
    result.history.push_back(std::move(record));
  }
  save(model, ema, options.steps, "last.ckpt");
  result.ema = ema.shadow();
  return result;
}

template LossTerms<float> separation_loss(const Tensor<float>&, const Tensor<float>&, const LossConfig&);
template LossTerms<double> separation_loss(const Tensor<double>&, const Tensor<double>&, const LossConfig&);

}  // namespace bsr
