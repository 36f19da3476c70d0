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
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "bsr/checkpoint.hpp"
#include "bsr/grad_check.hpp"
#include "bsr/model.hpp"
#include "bsr/ops.hpp"
#include "bsr/segments.hpp"

using namespace bsr;

namespace {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(normal(rng));
  return Tensor<T>(shape, std::move(v));
}

Waveform noise(std::size_t channels, std::size_t length, Rng& rng, float scale = 0.5f) {
  Waveform w(channels, length);
  std::uniform_real_distribution<float> u(-scale, scale);
  for (auto& s : w.samples) s = u(rng);
  return w;
}

// Tiny model: fft 16 at 44.1 kHz, bands {4, 5}, D = 8, one block.
ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.stft = {16, 4, true};
  cfg.bands = BandScheme{{4, 5}};
  cfg.dim = 8;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.attn_dropout = cfg.ff_dropout = 0.0;
  cfg.segment_seconds = 0.002;
  cfg.hop_seconds = 0.001;
  return cfg;
}

float max_abs_diff(const Waveform& a, const Waveform& b) {
  float m = 0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) m = std::max(m, std::abs(a.samples[i] - b.samples[i]));
  return m;
}

}  // namespace

TEST_CASE("glu") {
  Tensor<double> x({1, 4}, {0.5, -2.0, 0.0, 0.0});
  auto y = glu(x);
  CHECK(y.data()[0] == 0.25);
  CHECK(y.data()[1] == -1.0);
  Tensor<double> saturated({1, 4}, {0.5, -2.0, 40.0, 40.0});
  auto s = glu(saturated);
  CHECK(s.data()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.data()[1] == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK_THROWS_AS(glu(Tensor<double>::zeros({3})), DimensionError);

  Rng rng(1);
  auto v = random_tensor<double>({8}, rng);
  v.set_requires_grad(true);
  auto w = random_tensor<double>({4}, rng);
  auto report = grad_check([&] { return ops::sum(ops::mul(glu(v), w)); }, {v}, {.tolerance = 1e-6});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("mask estimate of zero input with zero biases is zero") {
  Rng rng(2);
  const BandScheme scheme{{3, 5}};
  auto params = init_mask_estimator<float>(scheme, 2, 8, rng);
  auto mask = mask_estimate(Tensor<float>::zeros({1, 4, 2, 8}), params, scheme, 2);
  CHECK(mask.shape() == Shape{1, 2, 4, 8, 2});
  for (float v : mask.data()) CHECK(v == 0.0f);
}

TEST_CASE("mask estimate shape for the default scheme") {
  Rng rng(3);
  const auto scheme = default_band_scheme({2048, 441, true}, 44100);
  auto params = init_mask_estimator<float>(scheme, 2, 4, rng);
  auto mask = mask_estimate(random_tensor<float>({1, 801, 62, 4}, rng), params, scheme, 2);
  CHECK(mask.shape() == Shape{1, 2, 801, 1025, 2});
}

TEST_CASE("mask estimate matches a naive per-band loop bit for bit") {
  Rng rng(4);
  const BandScheme scheme{{2, 3, 6}};
  const std::size_t B = 2, C = 2, T = 3, D = 8, F = 11;
  auto params = init_mask_estimator<float>(scheme, C, D, rng);
  for (auto& band : params.bands) {
    for (auto& v : band.hidden.bias.mutable_data()) v = std::normal_distribution<float>(0, 0.5f)(rng);
    for (auto& v : band.glu.bias.mutable_data()) v = std::normal_distribution<float>(0, 0.5f)(rng);
    for (auto& v : band.norm.mutable_data()) v = std::uniform_real_distribution<float>(0.5f, 1.5f)(rng);
  }
  auto h = random_tensor<float>({B, T, scheme.count(), D}, rng);
  auto mask = mask_estimate(h, params, scheme, C);

  std::size_t mismatches = 0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t n = 0; n < scheme.count(); ++n) {
        const auto& p = params.bands[n];
        std::vector<float> x(D);
        for (std::size_t d = 0; d < D; ++d) x[d] = h.data()[((b * T + t) * scheme.count() + n) * D + d];
        float ms = 0;
        for (float v : x) ms += v * v;
        ms /= static_cast<float>(D);
        const float inv = 1.0f / std::sqrt(ms + rms_epsilon<float>());
        for (std::size_t d = 0; d < D; ++d) x[d] = x[d] * inv * p.norm.data()[d];
        std::vector<float> hidden(4 * D);
        for (std::size_t j = 0; j < 4 * D; ++j) {
          float acc = 0;
          for (std::size_t d = 0; d < D; ++d) acc += x[d] * p.hidden.weight.data()[d * 4 * D + j];
          hidden[j] = std::tanh(acc + p.hidden.bias.data()[j]);
        }
        const std::size_t out = 2 * C * scheme.widths[n];
        std::vector<float> z(2 * out);
        for (std::size_t j = 0; j < 2 * out; ++j) {
          float acc = 0;
          for (std::size_t d = 0; d < 4 * D; ++d) acc += hidden[d] * p.glu.weight.data()[d * 2 * out + j];
          z[j] = acc + p.glu.bias.data()[j];
        }
        for (std::size_t i = 0; i < out; ++i) {
          const float g = z[out + i];
          const float gate = g >= 0 ? 1.0f / (1.0f + std::exp(-g)) : std::exp(g) / (1.0f + std::exp(g));
          const float value = z[i] * gate;
          const std::size_t c = i / (2 * scheme.widths[n]);
          const std::size_t f = scheme.start(n) + (i / 2) % scheme.widths[n];
          const std::size_t r = i % 2;
          mismatches += mask.data()[(((b * C + c) * T + t) * F + f) * 2 + r] != value;
        }
      }
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("constant band masks cover every bin exactly once") {
  Rng rng(5);
  const BandScheme scheme{{2, 3, 6}};
  auto params = init_mask_estimator<float>(scheme, 2, 8, rng);
  std::vector<std::complex<double>> values = {{1, 0.5}, {2, -1}, {3, 0.25}};
  set_constant_band_masks(params, scheme, 2, values);
  auto mask = mask_estimate(random_tensor<float>({1, 4, 3, 8}, rng), params, scheme, 2);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t t = 0; t < 4; ++t) {
      for (std::size_t f = 0; f < 11; ++f) {
        const auto v = values[scheme.band_of(f)];
        CHECK(mask.data()[((c * 4 + t) * 11 + f) * 2] == static_cast<float>(v.real()));
        CHECK(mask.data()[((c * 4 + t) * 11 + f) * 2 + 1] == static_cast<float>(v.imag()));
      }
    }
  }
}

TEST_CASE("identity mask reproduces the input") {
  auto run = smoke_config();
  Rng rng(6);
  auto model = init_stem_model<float>(run.model, "vocals", rng);
  set_constant_band_masks(model.mask, model.scheme, 2, {{1, 0}, {1, 0}});
  auto x = noise(2, run.model.segment_samples(), rng);
  auto out = forward_segment(model, x);
  CHECK(out.estimate.length == x.length);
  CHECK(max_abs_diff(out.estimate, x) < 1e-6f * x.peak());
  for (auto m : out.mask.values) CHECK(m == std::complex<float>(1, 0));

  auto silent = forward_segment(model, Waveform(2, x.length));
  CHECK(silent.estimate.peak() == 0.0f);
  CHECK_THROWS_AS(forward_segment(model, Waveform(2, x.length - 1)), DimensionError);
  CHECK_THROWS_AS(forward_segment(model, Waveform(1, x.length)), DimensionError);
}

TEST_CASE("zero input gives zero output for a random model") {
  auto run = smoke_config();
  Rng rng(7);
  auto model = init_stem_model<float>(run.model, "bass", rng);
  auto out = forward_segment(model, Waveform(2, run.model.segment_samples()));
  CHECK(out.estimate.peak() == 0.0f);
}

TEST_CASE("forward is deterministic in eval mode and models do not share storage") {
  auto run = smoke_config();
  Rng rng(8);
  auto model = init_stem_model<float>(run.model, "drums", rng);
  auto x = noise(2, run.model.segment_samples(), rng);
  auto a = forward_segment(model, x).estimate;
  auto b = forward_segment(model, x).estimate;
  CHECK(a.samples == b.samples);

  auto copy = model.clone();
  auto orig = model.named_params();
  auto cloned = copy.named_params();
  REQUIRE(orig.size() == cloned.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].second.node() != cloned[i].second.node());
    CHECK(std::equal(orig[i].second.data().begin(), orig[i].second.data().end(),
                     cloned[i].second.data().begin()));
  }
  cloned[0].second.mutable_data()[0] += 1.0f;
  CHECK(orig[0].second.data()[0] != cloned[0].second.data()[0]);
}

TEST_CASE("enframe") {
  Rng rng(9);
  auto x8 = noise(2, 8 * 100, rng);
  CHECK(enframe(x8, 800, 400).segments.size() == 1);
  auto x20 = noise(2, 20 * 100, rng);
  auto frames = enframe(x20, 800, 400);
  REQUIRE(frames.segments.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t i = 0; i < 800; ++i) CHECK(frames.segments[k].at(1, i) == x20.at(1, 400 * k + i));
  }
  auto x21 = noise(1, 2100, rng);
  auto padded = enframe(x21, 800, 400);
  REQUIRE(padded.segments.size() == 5);
  CHECK(padded.segments[4].at(0, 499) == x21.at(0, 2099));
  CHECK(padded.segments[4].at(0, 500) == 0.0f);
  CHECK(enframe(noise(1, 300, rng), 800, 400).segments.size() == 1);
  CHECK_THROWS_AS(enframe(Waveform(), 800, 400), DimensionError);
}

TEST_CASE("deframe round trips") {
  Rng rng(10);
  for (std::size_t length : {300, 800, 1200, 2000, 2001, 3333}) {
    auto x = noise(2, length, rng);
    auto frames = enframe(x, 800, 400);
    CHECK(deframe_oa(frames).samples == x.samples);
    CHECK(deframe_tc(frames).samples == x.samples);
  }
  // Single segment: the output is that segment.
  auto x = noise(1, 800, rng);
  CHECK(deframe_tc(enframe(x, 800, 400)).samples == x.samples);
}

TEST_CASE("deframe boundary arithmetic") {
  // 12 s at 100 Hz: segments [0, 8) and [4, 12); TC splices at 6 s.
  Waveform x(1, 1200);
  auto frames = enframe(x, 800, 400);
  REQUIRE(frames.segments.size() == 2);
  for (auto& v : frames.segments[0].samples) v = 1.0f;
  for (auto& v : frames.segments[1].samples) v = 3.0f;
  auto tc = deframe_tc(frames);
  CHECK(tc.at(0, 599) == 1.0f);
  CHECK(tc.at(0, 600) == 3.0f);
  auto oa = deframe_oa(frames);
  CHECK(oa.at(0, 399) == 1.0f);
  for (std::size_t i = 400; i < 800; ++i) CHECK(oa.at(0, i) == 2.0f);
  CHECK(oa.at(0, 800) == 3.0f);

  frames.segments.pop_back();
  CHECK_THROWS_AS(deframe_oa(frames), DimensionError);
  frames = enframe(x, 800, 400);
  frames.segments[1] = Waveform(1, 700);
  CHECK_THROWS_AS(deframe_tc(frames), DimensionError);
}

TEST_CASE("residual other") {
  Rng rng(11);
  auto v = noise(2, 500, rng), b = noise(2, 500, rng), d = noise(2, 500, rng), o = noise(2, 500, rng);
  Waveform mix(2, 500);
  for (std::size_t i = 0; i < mix.samples.size(); ++i) {
    mix.samples[i] = v.samples[i] + b.samples[i] + d.samples[i] + o.samples[i];
  }
  auto other = residual_other(mix, v, b, d);
  CHECK(max_abs_diff(other, o) < 1e-6f);
  Waveform zero(2, 500);
  CHECK(residual_other(mix, zero, zero, zero).samples == mix.samples);
  auto e = noise(2, 500, rng);
  Waveform shifted = mix;
  for (std::size_t i = 0; i < mix.samples.size(); ++i) shifted.samples[i] += e.samples[i];
  auto delta = residual_other(shifted, v, b, d);
  for (std::size_t i = 0; i < delta.samples.size(); ++i) {
    CHECK(delta.samples[i] - other.samples[i] == doctest::Approx(e.samples[i]).epsilon(1e-5));
  }
  CHECK_THROWS_AS(residual_other(mix, noise(2, 499, rng), b, d), DimensionError);
}

TEST_CASE("separate_track does not depend on the job count") {
  auto run = smoke_config();
  Rng rng(12);
  auto model = init_stem_model<float>(run.model, "vocals", rng);
  auto x = noise(2, 3 * run.model.segment_samples() / 2 + 17, rng);
  auto one = separate_track(model, x, DeframeMode::oa, 1);
  auto three = separate_track(model, x, DeframeMode::oa, 3);
  CHECK(one.length == x.length);
  CHECK(one.samples == three.samples);
  Waveform other_rate(2, x.length, 48000);
  CHECK_THROWS_AS(separate_track(model, other_rate, DeframeMode::tc, 1), MismatchError);
}

TEST_CASE("parameter breakdown") {
  auto canonical = canonical_config().model;
  auto p12 = param_count(canonical);
  CHECK(p12.band_split == 1602308);
  CHECK(p12.per_block == 3547392);
  CHECK(std::abs(static_cast<double>(p12.per_block) - 3.533e6) / 3.533e6 < 0.02);
  CHECK(p12.total == p12.band_split + 12 * p12.per_block + p12.mask);
  CHECK(std::abs(static_cast<double>(p12.total) - 93.4e6) / 93.4e6 < 0.01);
  auto six = canonical;
  six.depth = 6;
  auto p6 = param_count(six);
  CHECK(p12.total - p6.total == 6 * p12.per_block);
  CHECK(std::abs(static_cast<double>(p6.total) - 72.2e6) / 72.2e6 < 0.01);

  // band split 152 + 188, block 2 * (296 + 560), mask 1352 + 1616
  auto toy = param_count(toy_config());
  CHECK(toy.band_split == 340);
  CHECK(toy.per_block == 1712);
  CHECK(toy.mask == 2968);
  CHECK(toy.positional == 0);
  CHECK(toy.total == 5020);
  Rng rng(1);
  auto model = init_stem_model<float>(toy_config(), "vocals", rng);
  std::size_t counted = 0;
  for (const auto& [name, t] : model.named_params()) counted += t.numel();
  CHECK(counted == 5020);
}

TEST_CASE("config text round trip and errors") {
  auto cfg = smoke_config();
  cfg.model.positional = PositionalVariant::learned_absolute;
  cfg.model.deframe = DeframeMode::tc;
  cfg.train.seed = 1234567890123ull;
  cfg.train.learning_rate = 1.0 / 3.0;
  auto back = RunConfig::parse(cfg.serialize());
  CHECK(back.serialize() == cfg.serialize());
  CHECK(back.model.bands == cfg.model.bands);
  CHECK(back.train.learning_rate == cfg.train.learning_rate);

  auto canonical = RunConfig::parse("# defaults\nband_widths = default\n");
  CHECK(canonical.model.band_scheme().count() == 62);
  CHECK(canonical.serialize().find("band_widths = 2,2,") != std::string::npos);

  CHECK_THROWS_AS(RunConfig::parse("dims = 4\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("dim = 4\ndim = 4\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("dim = four\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("dim 4\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("heads = 5\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("band_widths = 512,512\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("target_stem = other\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("segment_seconds = 4\nhop_seconds = 4\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("loss_windows = 256,512\n"), ConfigError);
  try {
    RunConfig::parse("dim = 16\n\nbogus = 1\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  auto run = smoke_config();
  Rng rng(13);
  auto model = init_stem_model<float>(run.model, "vocals", rng);
  auto ema = model.clone().named_params();
  for (auto& [name, t] : ema) {
    for (auto& v : t.mutable_data()) v *= 0.5f;
  }
  auto ckpt = make_checkpoint(model, run, 42, &ema);
  const auto bytes = encode_checkpoint(ckpt);
  auto back = decode_checkpoint(bytes);
  CHECK(back.stem == "vocals");
  CHECK(back.step == 42);
  CHECK(back.config.serialize() == run.serialize());
  REQUIRE(back.params.size() == ckpt.params.size());
  REQUIRE(back.ema.size() == ckpt.ema.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    CHECK(back.params[i].first == ckpt.params[i].first);
    CHECK(back.params[i].second.shape() == ckpt.params[i].second.shape());
    CHECK(std::memcmp(back.params[i].second.data().data(), ckpt.params[i].second.data().data(),
                      ckpt.params[i].second.numel() * sizeof(float)) == 0);
  }
  CHECK(encode_checkpoint(back) == bytes);

  auto raw = model_from_checkpoint(back, false);
  auto averaged = model_from_checkpoint(back, true);
  CHECK(raw.named_params()[0].second.data()[0] == model.named_params()[0].second.data()[0]);
  CHECK(averaged.named_params()[0].second.data()[0] == 0.5f * model.named_params()[0].second.data()[0]);

  auto path = (std::filesystem::temp_directory_path() / "bsr_test_ckpt.bin").string();
  save_checkpoint(path, ckpt);
  CHECK(encode_checkpoint(load_checkpoint(path)) == bytes);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  CHECK_THROWS_AS(save_checkpoint("/nonexistent-dir/x.ckpt", ckpt), IoError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  auto run = smoke_config();
  Rng rng(14);
  auto model = init_stem_model<float>(run.model, "bass", rng);
  const auto bytes = encode_checkpoint(make_checkpoint(model, run, 0));
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(decode_checkpoint(flipped), DataError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 9)), DataError);
  CHECK_THROWS_AS(decode_checkpoint("not a checkpoint"), DataError);

  // A valid container whose weights disagree with its config.
  auto ckpt = make_checkpoint(model, run, 0);
  ckpt.config.model.dim = 32;
  auto mismatched = decode_checkpoint(encode_checkpoint(ckpt));
  CHECK_THROWS_AS(model_from_checkpoint(mismatched), DataError);
}
