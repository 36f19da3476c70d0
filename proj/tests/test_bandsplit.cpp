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
#include <random>

#include "bsr/bandsplit.hpp"
#include "bsr/grad_check.hpp"
#include "bsr/ops.hpp"

using namespace bsr;

namespace {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(normal(rng));
  return Tensor<T>(shape, std::move(v));
}

// Per-frame, per-band loop with the same accumulation order as the batched path.
std::vector<float> naive_band_split(const Tensor<float>& spec, const BandScheme& scheme,
                                    const BandSplitParams<float>& params) {
  const std::size_t B = spec.dim(0), C = spec.dim(1), T = spec.dim(2), F = spec.dim(3);
  const std::size_t N = scheme.count();
  const std::size_t D = params.bands[0].proj.out_features();
  const auto x = spec.data();
  std::vector<float> out(B * T * N * D);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      std::size_t start = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t width = scheme.widths[n];
        std::vector<float> feat;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t f = start; f < start + width; ++f) {
            for (std::size_t r = 0; r < 2; ++r) {
              feat.push_back(x[(((b * C + c) * T + t) * F + f) * 2 + r]);
            }
          }
        }
        float ms = 0.0f;
        for (float v : feat) ms += v * v;
        ms /= static_cast<float>(feat.size());
        const float inv = 1.0f / std::sqrt(ms + rms_epsilon<float>());
        const auto scale = params.bands[n].norm.data();
        for (std::size_t i = 0; i < feat.size(); ++i) feat[i] = feat[i] * inv * scale[i];
        const auto w = params.bands[n].proj.weight.data();
        const auto bias = params.bands[n].proj.bias.data();
        for (std::size_t d = 0; d < D; ++d) {
          float acc = 0.0f;
          for (std::size_t i = 0; i < feat.size(); ++i) acc += feat[i] * w[i * D + d];
          out[((b * T + t) * N + n) * D + d] = acc + bias[d];
        }
        start += width;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("default band scheme for 2048 @ 44.1 kHz") {
  const auto scheme = default_band_scheme(StftConfig{2048, 441, true}, 44100);
  CHECK(scheme.count() == 62);
  CHECK(scheme.total_bins() == 1025);
  std::vector<std::size_t> expected;
  for (auto [count, width] : std::vector<std::pair<int, std::size_t>>{
           {24, 2}, {12, 4}, {8, 12}, {8, 24}, {8, 48}}) {
    expected.insert(expected.end(), count, width);
  }
  expected.push_back(128);
  expected.push_back(129);
  CHECK(scheme.widths == expected);
}

TEST_CASE("band scheme completeness and list round trip") {
  const auto scheme = default_band_scheme(StftConfig{2048, 441, true}, 44100);
  std::vector<int> owner(scheme.total_bins(), -1);
  for (std::size_t n = 0; n < scheme.count(); ++n) {
    for (std::size_t f = scheme.start(n); f < scheme.start(n) + scheme.widths[n]; ++f) {
      CHECK(owner[f] == -1);
      owner[f] = static_cast<int>(n);
    }
  }
  for (std::size_t f = 0; f < owner.size(); ++f) {
    REQUIRE(owner[f] >= 0);
    CHECK(scheme.band_of(f) == static_cast<std::size_t>(owner[f]));
  }
  CHECK(BandScheme::from_list(scheme.to_list()) == scheme);
  CHECK(BandScheme::from_list(" 3, 4 ,5").widths == std::vector<std::size_t>{3, 4, 5});
  CHECK_THROWS_AS(BandScheme::from_list("3,,4"), ConfigError);
  CHECK_THROWS_AS(BandScheme::from_list("3,-1"), ConfigError);
  CHECK_THROWS_AS(BandScheme::from_list("3,x"), ConfigError);
}

TEST_CASE("band scheme validation") {
  BandScheme single{{1025}};
  CHECK_NOTHROW(single.validate(1025));
  CHECK_THROWS_AS(single.validate(1024), ConfigError);
  const BandScheme zero_width{{4, 0, 3}};
  CHECK_THROWS_AS(zero_width.validate(7), ConfigError);
  const BandScheme empty;
  CHECK_THROWS_AS(empty.validate(0), ConfigError);
  // 16-point FFT at 44.1 kHz has 9 bins; the 24-bin region overshoots.
  CHECK_THROWS_AS(default_band_scheme(StftConfig{16, 4, true}, 44100), ConfigError);
  // Other configurations still derive a complete tiling.
  const auto s = default_band_scheme(StftConfig{4096, 1024, true}, 44100);
  CHECK(s.total_bins() == 2049);
}

TEST_CASE("rmsnorm examples and scale invariance") {
  auto ones = Tensor<double>::full({6}, 1.0);
  auto scale = Tensor<double>::full({6}, 1.0);
  auto y = rmsnorm(ones, scale);
  for (double v : y.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(3);
  auto x = random_tensor<double>({4, 10}, rng);
  auto s = random_tensor<double>({10}, rng);
  auto base = rmsnorm(x, s);
  for (double alpha : {0.01, 0.5, 3.0, 1000.0}) {
    auto scaled = rmsnorm(ops::mul_scalar(x, alpha), s);
    for (std::size_t i = 0; i < base.numel(); ++i) {
      CHECK(scaled.data()[i] == doctest::Approx(base.data()[i]).epsilon(1e-6));
    }
  }
  CHECK_THROWS_AS(rmsnorm(x, Tensor<double>::full({9}, 1.0)), DimensionError);
  // Zero input stays zero thanks to the epsilon guard.
  auto z = rmsnorm(Tensor<double>::zeros({5}), Tensor<double>::full({5}, 1.0));
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("rmsnorm gradient") {
  Rng rng(4);
  auto x = random_tensor<double>({3, 7}, rng);
  auto s = random_tensor<double>({7}, rng);
  auto w = random_tensor<double>({3, 7}, rng);
  x.set_requires_grad(true);
  s.set_requires_grad(true);
  auto report = grad_check([&] { return ops::sum(ops::mul(rmsnorm(x, s), w)); }, {x, s},
                           {.tolerance = 1e-6});
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("band split matches a naive per-frame loop bit for bit") {
  Rng rng(11);
  const BandScheme scheme{{2, 2, 4, 12, 13}};
  const std::size_t B = 2, C = 2, T = 5, D = 16;
  auto params = init_band_split<float>(scheme, C, D, rng);
  for (auto& g : params.bands) {
    for (auto& v : g.norm.mutable_data()) v = 0.5f + std::uniform_real_distribution<float>(0, 1)(rng);
    for (auto& v : g.proj.bias.mutable_data()) v = std::normal_distribution<float>(0, 1)(rng);
  }
  auto spec = random_tensor<float>({B, C, T, scheme.total_bins(), 2}, rng);
  auto out = band_split_forward(spec, scheme, params);
  CHECK(out.shape() == Shape{B, T, scheme.count(), D});
  const auto expected = naive_band_split(spec, scheme, params);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) mismatches += out.data()[i] != expected[i];
  CHECK(mismatches == 0);
}

TEST_CASE("band split of a zero spectrogram is the bias") {
  Rng rng(12);
  const BandScheme scheme{{3, 5}};
  auto params = init_band_split<float>(scheme, 2, 8, rng);
  for (auto& g : params.bands) {
    for (auto& v : g.proj.bias.mutable_data()) v = std::normal_distribution<float>(0, 1)(rng);
  }
  auto out = band_split_forward(Tensor<float>::zeros({1, 2, 4, 8, 2}), scheme, params);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t d = 0; d < 8; ++d) {
        CHECK(out.data()[(t * 2 + n) * 8 + d] == params.bands[n].proj.bias.data()[d]);
      }
    }
  }
}

TEST_CASE("band split locality") {
  Rng rng(13);
  const BandScheme scheme{{2, 3, 4, 7}};
  const std::size_t C = 2, T = 3, F = 16, D = 8;
  auto params = init_band_split<double>(scheme, C, D, rng);
  auto spec = random_tensor<double>({1, C, T, F, 2}, rng);
  auto base = band_split_forward(spec, scheme, params);
  for (std::size_t n = 0; n < scheme.count(); ++n) {
    auto perturbed = spec.detach();
    auto data = perturbed.mutable_data();
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t f = scheme.start(n); f < scheme.start(n) + scheme.widths[n]; ++f) {
          data[((c * T + t) * F + f) * 2] = 0.0;
          data[((c * T + t) * F + f) * 2 + 1] = 0.0;
        }
      }
    }
    auto out = band_split_forward(perturbed, scheme, params);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t m = 0; m < scheme.count(); ++m) {
        bool same = true;
        for (std::size_t d = 0; d < D; ++d) {
          const std::size_t i = (t * scheme.count() + m) * D + d;
          same = same && out.data()[i] == base.data()[i];
        }
        CHECK(same == (m != n));
      }
    }
  }
}

TEST_CASE("band split shape at full scale and parameter count") {
  const auto scheme = default_band_scheme(StftConfig{2048, 441, true}, 44100);
  std::size_t hand = 0;
  // 2*C*Fn*D + D + 2*C*Fn per band, C = 2, D = 384
  hand += 24 * (8 * 384 + 384 + 8);
  hand += 12 * (16 * 384 + 384 + 16);
  hand += 8 * (48 * 384 + 384 + 48);
  hand += 8 * (96 * 384 + 384 + 96);
  hand += 8 * (192 * 384 + 384 + 192);
  hand += (512 * 384 + 384 + 512) + (516 * 384 + 384 + 516);
  CHECK(hand == 1602308);
  CHECK(band_split_param_count(scheme, 2, 384) == hand);

  Rng rng(1);
  auto params = init_band_split<float>(scheme, 2, 384, rng);
  std::size_t counted = 0;
  for (const auto& g : params.bands) {
    counted += g.norm.numel() + g.proj.weight.numel() + g.proj.bias.numel();
  }
  CHECK(counted == hand);
  auto spec = random_tensor<float>({1, 2, 801, 1025, 2}, rng, 0.1);
  auto out = band_split_forward(spec, scheme, params);
  CHECK(out.shape() == Shape{1, 801, 62, 384});
}

TEST_CASE("band split rejects mismatched parameters") {
  Rng rng(2);
  const BandScheme two{{4, 4}};
  const BandScheme uneven{{4, 5}};
  auto params = init_band_split<float>(two, 2, 8, rng);
  const auto nine_bins = Tensor<float>::zeros({1, 2, 3, 9, 2});
  const auto eight_bins = Tensor<float>::zeros({1, 2, 3, 8, 2});
  const auto rank4 = Tensor<float>::zeros({2, 3, 8, 2});
  CHECK_THROWS_AS(band_split_forward(nine_bins, uneven, params), MismatchError);
  CHECK_THROWS_AS(band_split_forward(eight_bins, uneven, params), ConfigError);
  CHECK_THROWS_AS(band_split_forward(rank4, two, params), DimensionError);
  auto mono = init_band_split<float>(two, 1, 8, rng);
  CHECK_THROWS_AS(band_split_forward(eight_bins, two, mono), MismatchError);
}

TEST_CASE("band split gradient") {
  Rng rng(5);
  const BandScheme scheme{{2, 3}};
  auto params = init_band_split<double>(scheme, 1, 4, rng);
  auto spec = random_tensor<double>({1, 1, 2, 5, 2}, rng);
  spec.set_requires_grad(true);
  auto w = random_tensor<double>({1, 2, 2, 4}, rng);
  std::vector<Tensor<double>> leaves{spec};
  for (auto& g : params.bands) {
    leaves.push_back(g.norm);
    leaves.push_back(g.proj.weight);
    leaves.push_back(g.proj.bias);
  }
  auto report = grad_check(
      [&] { return ops::sum(ops::mul(band_split_forward(spec, scheme, params), w)); }, leaves,
      {.tolerance = 1e-6});
  CHECK(report.passed);
}
