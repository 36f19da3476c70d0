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

#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "bsr/checkpoint.hpp"
#include "bsr/fixture.hpp"
#include "bsr/grad_check.hpp"
#include "bsr/ops.hpp"
#include "bsr/training.hpp"

using namespace bsr;

namespace {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(normal(rng));
  return Tensor<T>(shape, std::move(v));
}

Waveform constant(std::size_t channels, std::size_t length, float value) {
  Waveform w(channels, length);
  for (auto& v : w.samples) v = value;
  return w;
}

// Mean over bins of |re| + |im| of the direct DFT of one Hann-windowed frame
// of a constant signal c.
double constant_frame_term(std::size_t n, double c) {
  double total = 0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * j / n);
      acc += c * w * std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(j * k) / n);
    }
    total += std::abs(acc.real()) + std::abs(acc.imag());
  }
  return total / static_cast<double>(n / 2 + 1);
}

Song tiny_song(const std::string& name, std::size_t length, Rng& rng, float scale = 0.3f) {
  Song song;
  song.name = name;
  std::uniform_real_distribution<float> u(-scale, scale);
  for (auto& stem : song.stems) {
    stem = Waveform(2, length);
    for (auto& v : stem.samples) v = u(rng);
  }
  return song;
}

RunConfig overfit_config() {
  auto cfg = smoke_config();
  cfg.train.gain_db = 0.0;
  cfg.train.silence_prob = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("loss of identical signals is zero and the loss is symmetric") {
  Rng rng(1);
  auto y = random_tensor<double>({2, 2, 3000}, rng, 0.3);
  auto yhat = random_tensor<double>({2, 2, 3000}, rng, 0.3);
  LossConfig cfg;
  auto same = separation_loss(y, y, cfg);
  CHECK(same.total.item() == 0.0);
  CHECK(same.spectral.size() == 5);
  auto ab = separation_loss(y, yhat, cfg);
  auto ba = separation_loss(yhat, y, cfg);
  CHECK(ab.total.item() > 0.0);
  CHECK(ab.total.item() == doctest::Approx(ba.total.item()).epsilon(1e-12));
  CHECK_THROWS_AS(separation_loss(y, random_tensor<double>({2, 2, 2999}, rng), cfg), DimensionError);
}

TEST_CASE("loss of a constant offset matches the direct DFT") {
  Rng rng(2);
  const double c = 0.37;
  auto y = random_tensor<double>({1, 2, 5000}, rng, 0.3);
  auto yhat = ops::add_scalar(y, c);
  LossConfig cfg;
  auto terms = separation_loss(y, yhat, cfg);
  CHECK(terms.time == doctest::Approx(c).epsilon(1e-12));
  for (std::size_t r = 0; r < cfg.windows.size(); ++r) {
    CHECK(terms.spectral[r] == doctest::Approx(constant_frame_term(cfg.windows[r], c)).epsilon(1e-9));
  }
  double sum = terms.time;
  for (double s : terms.spectral) sum += s;
  CHECK(terms.total.item() == doctest::Approx(sum).epsilon(1e-12));

  Waveform a = constant(2, 5000, 0.0f), b = constant(2, 5000, 0.25f);
  CHECK(separation_loss(a, b, cfg) == doctest::Approx(separation_loss(b, a, cfg)).epsilon(1e-6));
}

TEST_CASE("loss gradient matches finite differences") {
  Rng rng(3);
  auto y = random_tensor<double>({1, 2, 300}, rng);
  auto yhat = random_tensor<double>({1, 2, 300}, rng);
  yhat.set_requires_grad(true);
  LossConfig cfg{{64, 32, 16}, 7};
  auto report = grad_check([&] { return separation_loss(y, yhat, cfg).total; }, {yhat},
                           {.epsilon = 1e-5, .tolerance = 1e-5});
  INFO(report.worst);
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("end-to-end loss gradient through the model") {
  ModelConfig mc;
  mc.stft = {256, 64, true};
  mc.bands = BandScheme{{64, 65}};
  mc.dim = 8;
  mc.depth = 1;
  mc.heads = 2;
  mc.attn_dropout = mc.ff_dropout = 0.0;
  mc.segment_seconds = 0.1;
  mc.hop_seconds = 0.05;
  Rng rng(4);
  auto model = init_stem_model<double>(mc, "vocals", rng);
  auto mixture = random_tensor<double>({1, 2, mc.segment_samples()}, rng, 0.3);
  auto target = random_tensor<double>({1, 2, mc.segment_samples()}, rng, 0.1);
  auto f = [&] { return separation_loss(target, forward(model, mixture, {}).estimate, LossConfig{}).total; };

  std::vector<Tensor<double>> all, band_split, blocks, mask;
  for (const auto& [name, t] : model.named_params()) {
    all.push_back(t);
    if (name.rfind("band_split.", 0) == 0) band_split.push_back(t);
    if (name.rfind("blocks.", 0) == 0) blocks.push_back(t);
    if (name.rfind("mask.", 0) == 0) mask.push_back(t);
  }
  const GradCheckOptions opts{.epsilon = 1e-7, .tolerance = 1e-3, .samples = 24, .seed = 7, .floor = 1e-4};
  for (const auto* group : {&all, &band_split, &blocks, &mask}) {
    auto report = grad_check(f, *group, opts);
    INFO(report.worst);
    CHECK(report.checked == 24);
    CHECK(report.max_rel_error < 1e-3);
  }
}

TEST_CASE("loudness") {
  Waveform square(2, 1000);
  for (std::size_t i = 0; i < square.samples.size(); ++i) square.samples[i] = (i / 7) % 2 ? 1.0f : -1.0f;
  CHECK(loudness_db(square) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::isinf(loudness_db(Waveform(2, 100))));
  CHECK(loudness_db(Waveform(2, 100)) < 0);
  Waveform sine(1, 44100);
  for (std::size_t i = 0; i < sine.length; ++i) {
    sine.samples[i] = 0.00316f * static_cast<float>(std::sin(2 * std::numbers::pi * 441.0 * i / 44100.0));
  }
  CHECK(loudness_db(sine) == doctest::Approx(20 * std::log10(0.00316 / std::sqrt(2.0))).epsilon(1e-4));
  CHECK(loudness_db(sine) < -50.0);
}

TEST_CASE("segment pool") {
  SegmentPool pool(512);
  for (std::size_t k = 0; k < 300; ++k) pool.push(0, constant(1, 4, static_cast<float>(k)));
  CHECK(pool.size(0) == 300);
  CHECK(pool.size(1) == 0);
  for (std::size_t k = 300; k < 512; ++k) pool.push(0, constant(1, 4, static_cast<float>(k)));
  CHECK(pool.size(0) == 512);
  pool.push(0, constant(1, 4, 512.0f));
  CHECK(pool.size(0) == 512);
  for (std::size_t i = 0; i < 512; ++i) CHECK(pool.at(0, i).samples[0] == static_cast<float>(i + 1));
  Rng rng(5);
  CHECK_THROWS_AS(pool.sample(2, rng), DataError);
  CHECK_THROWS_AS(SegmentPool(0), ConfigError);
}

TEST_CASE("pool update crops, gates and rejects short songs") {
  Rng rng(6);
  SegmentPool pool(4);
  auto song = tiny_song("s", 1000, rng);
  const CropConfig crop{200, -50.0, 10};
  CHECK(pool_update(pool, song, crop, rng) == 4);
  for (std::size_t s = 0; s < 4; ++s) {
    const auto seg = pool.at(s, 0);
    CHECK(seg.length == 200);
    // The crop is a contiguous window of the stem.
    bool found = false;
    for (std::size_t off = 0; off + 200 <= 1000 && !found; ++off) {
      found = std::equal(seg.channel(1).begin(), seg.channel(1).end(),
                         song.stems[s].channel(1).begin() + static_cast<std::ptrdiff_t>(off));
    }
    CHECK(found);
  }
  Song silent;
  silent.name = "silent";
  for (auto& s : silent.stems) s = Waveform(2, 1000);
  SegmentPool empty(4);
  CHECK(pool_update(empty, silent, crop, rng) == 0);
  for (std::size_t s = 0; s < 4; ++s) CHECK(empty.size(s) == 0);
  CHECK_THROWS_AS(pool_update(empty, tiny_song("short", 150, rng), crop, rng), DataError);

  // Quiet stems are redrawn: only the loud half of this stem passes the gate.
  Song half = tiny_song("half", 1000, rng);
  for (std::size_t i = 0; i < 600; ++i) {
    half.stems[0].at(0, i) = 0.0f;
    half.stems[0].at(1, i) = 0.0f;
  }
  SegmentPool gated(64);
  for (int k = 0; k < 50; ++k) pool_update(gated, half, {200, -50.0, 20}, rng);
  for (std::size_t i = 0; i < gated.size(0); ++i) CHECK(loudness_db(gated.at(0, i)) > -50.0);
}

TEST_CASE("sample batch") {
  Rng rng(7);
  SegmentPool pool(8);
  for (int k = 0; k < 3; ++k) pool_update(pool, tiny_song("s" + std::to_string(k), 400, rng), {100, -50, 10}, rng);

  auto silent = sample_batch(pool, 3, {3.0, 1.0}, rng);
  CHECK(silent.mixture.shape() == Shape{3, 2, 100});
  for (float v : silent.mixture.data()) CHECK(v == 0.0f);
  CHECK(silent.silenced == 12);

  auto plain = sample_batch(pool, 4, {0.0, 0.0}, rng);
  for (std::size_t i = 0; i < plain.mixture.numel(); ++i) {
    float sum = 0;
    for (std::size_t s = 0; s < 4; ++s) sum += plain.stems[s].data()[i];
    CHECK(plain.mixture.data()[i] == sum);
  }
  // Every drawn stem is one of the pooled segments, untouched.
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t b = 0; b < 4; ++b) {
      bool found = false;
      for (std::size_t i = 0; i < pool.size(s) && !found; ++i) {
        const auto seg = pool.at(s, i);
        found = std::equal(seg.samples.begin(), seg.samples.end(),
                           plain.stems[s].data().begin() + static_cast<std::ptrdiff_t>(b * 200));
      }
      CHECK(found);
    }
  }

  // Gains stay within +-3 dB.
  auto gained = sample_batch(pool, 50, {3.0, 0.0}, rng);
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t b = 0; b < 50; ++b) {
      const float v = gained.stems[s].data()[b * 200];
      bool ok = false;
      for (std::size_t i = 0; i < pool.size(s) && !ok; ++i) {
        const float ref = pool.at(s, i).samples[0];
        const double ratio = std::abs(v / ref);
        ok = ratio >= std::pow(10.0, -3.0 / 20) * 0.9999 && ratio <= std::pow(10.0, 3.0 / 20) * 1.0001;
      }
      CHECK(ok);
    }
  }

  SegmentPool small(8);
  pool_update(small, tiny_song("x", 10, rng), {4, -50, 10}, rng);
  auto many = sample_batch(small, 2500, {3.0, 0.1}, rng);
  const double fraction = static_cast<double>(many.silenced) / 10000.0;
  CHECK(fraction >= 0.09);
  CHECK(fraction <= 0.11);

  SegmentPool missing(8);
  missing.push(0, constant(2, 10, 0.5f));
  CHECK_THROWS_AS(sample_batch(missing, 1, {}, rng), DataError);
}

TEST_CASE("adamw") {
  const double lr = 1e-3;
  Tensor<float> p({3}, {0.5f, -1.0f, 2.0f}, true);
  {
    AdamW opt({{"p", p}}, {0.9, 0.999, 1e-8, 0.0});
    for (int k = 0; k < 5; ++k) opt.step(lr);
    CHECK(p.data()[0] == 0.5f);
    CHECK(p.data()[2] == 2.0f);
  }
  {
    Tensor<float> q({1}, {1.0f}, true);
    AdamW opt({{"q", q}}, {0.9, 0.999, 1e-8, 0.1});
    double expected = 1.0;
    for (int k = 0; k < 10; ++k) {
      opt.step(lr);
      expected *= 1.0 - lr * 0.1;
    }
    CHECK(q.data()[0] == doctest::Approx(expected).epsilon(1e-6));
  }
  {
    // Constant gradient g: m_hat = g and v_hat = g^2, so every step moves by
    // lr * g / (|g| + eps).
    Tensor<float> x({1}, {0.0f}, true);
    AdamW opt({{"x", x}}, {0.9, 0.999, 1e-8, 0.0});
    const double g = 0.25;
    double expected = 0.0;
    for (int k = 0; k < 20; ++k) {
      opt.zero_grad();
      Tape<float> tape;
      auto rec = tape.record();
      tape.backward(ops::mul_scalar(ops::sum(x), static_cast<float>(g)));
      opt.step(lr);
      expected -= lr * g / (g + 1e-8);
      CHECK(x.data()[0] == doctest::Approx(expected).epsilon(1e-5));
    }
    CHECK(opt.steps() == 20);
  }
}

TEST_CASE("learning rate schedule") {
  CHECK(lr_at(0) == 5e-4);
  CHECK(lr_at(39999) == 5e-4);
  CHECK(lr_at(40000) == doctest::Approx(4.5e-4).epsilon(1e-12));
  CHECK(lr_at(80000) == doctest::Approx(4.05e-4).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(5, 1e-3, 0.9, 0), ConfigError);
}

TEST_CASE("ema") {
  Tensor<float> p({2}, {1.0f, -2.0f}, true);
  NamedParams<float> params{{"p", p}};
  Ema fixed(params, 0.999);
  for (int k = 0; k < 10; ++k) fixed.update(params);
  CHECK(fixed.shadow()[0].second.data()[0] == doctest::Approx(1.0).epsilon(1e-6));

  Ema ema(params, 0.999);
  const double c = 3.0, e0 = 1.0;
  p.mutable_data()[0] = static_cast<float>(c);
  for (int k = 1; k <= 2000; ++k) {
    ema.update(params);
    if (k % 500 == 0) {
      CHECK(ema.shadow()[0].second.data()[0] == doctest::Approx(c + (e0 - c) * std::pow(0.999, k)).epsilon(1e-4));
    }
  }
  Ema tracking(params, 0.0);
  p.mutable_data()[1] = 7.0f;
  tracking.update(params);
  CHECK(tracking.shadow()[0].second.data()[1] == 7.0f);
  NamedParams<float> wrong{{"p", Tensor<float>::zeros({3})}};
  CHECK_THROWS_AS(ema.update(wrong), DimensionError);
}

TEST_CASE("training with zero steps writes the initial model") {
  auto cfg = overfit_config();
  Rng rng(8);
  const auto song = synthetic_song("one", 0.6, 44100, 2, rng);
  const auto dir = std::filesystem::temp_directory_path() / "bsr_train_zero";
  std::filesystem::remove_all(dir);
  auto result = train(cfg, {song}, {}, {0, dir.string()});
  CHECK(result.history.empty());
  auto ckpt = load_checkpoint((dir / "last.ckpt").string());
  CHECK(ckpt.step == 0);
  const auto params = result.model.named_params();
  REQUIRE(ckpt.params.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(std::equal(params[i].second.data().begin(), params[i].second.data().end(),
                     ckpt.params[i].second.data().begin()));
    CHECK(std::equal(params[i].second.data().begin(), params[i].second.data().end(),
                     ckpt.ema[i].second.data().begin()));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("training is deterministic and logs every step") {
  auto cfg = smoke_config();
  cfg.train.checkpoint_every = 3;
  cfg.train.validate_every = 2;
  Rng rng(9);
  const std::vector<Song> songs = {synthetic_song("a", 0.8, 44100, 2, rng), synthetic_song("b", 0.7, 44100, 2, rng)};
  const std::vector<Song> valid = {synthetic_song("v", 1.2, 44100, 2, rng)};
  auto run = [&](const std::string& dir) {
    std::filesystem::remove_all(dir);
    std::ostringstream log;
    train(cfg, songs, valid, {4, dir, &log});
    return log.str();
  };
  const auto tmp = std::filesystem::temp_directory_path();
  const auto a = run((tmp / "bsr_train_a").string());
  const auto b = run((tmp / "bsr_train_b").string());
  CHECK(a == b);
  CHECK(std::count(a.begin(), a.end(), '\n') == 4);
  CHECK(a.find("\"valid_sdr\"") != std::string::npos);
  for (const char* name : {"last.ckpt", "best.ckpt", "step_0000003.ckpt", "train.jsonl"}) {
    std::ifstream fa(tmp / "bsr_train_a" / name, std::ios::binary), fb(tmp / "bsr_train_b" / name, std::ios::binary);
    REQUIRE(fa);
    REQUIRE(fb);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
  }
  std::filesystem::remove_all(tmp / "bsr_train_a");
  std::filesystem::remove_all(tmp / "bsr_train_b");
}

TEST_CASE("divergence is reported with the step and seed") {
  auto cfg = overfit_config();
  cfg.train.learning_rate = 1e30;
  cfg.train.seed = 77;
  Rng rng(10);
  const auto song = synthetic_song("one", 0.5, 44100, 2, rng);
  try {
    train(cfg, {song}, {}, {5});
    FAIL("expected divergence");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 2") != std::string::npos);
    CHECK(msg.find("seed 77") != std::string::npos);
  }
}

TEST_CASE("training rejects unusable data") {
  auto cfg = overfit_config();
  Rng rng(11);
  CHECK_THROWS_AS(train(cfg, {}, {}, {1}), DataError);
  CHECK_THROWS_AS(train(cfg, {synthetic_song("short", 0.3, 44100, 2, rng)}, {}, {1}), DataError);
  auto mono = synthetic_song("mono", 0.6, 44100, 1, rng);
  CHECK_THROWS_AS(train(cfg, {mono}, {}, {1}), DataError);
  Song quiet = synthetic_song("quiet", 0.6, 44100, 2, rng);
  for (auto& v : quiet.stems[2].samples) v *= 1e-4f;
  CHECK_THROWS_AS(train(cfg, {quiet}, {}, {1}), DataError);
}
